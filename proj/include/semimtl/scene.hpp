#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "semimtl/rng.hpp"
#include "semimtl/tensor.hpp"

namespace semimtl {

enum class TaskId { Seg, Depth };

const char* task_name(TaskId t);

struct TaskSet {
    bool seg = false;
    bool depth = false;

    bool contains(TaskId t) const { return t == TaskId::Seg ? seg : depth; }
    bool empty() const { return !seg && !depth; }
};

/// Appearance knobs that induce the domain shift between datasets. Labels are
/// never touched by these; only the rendered image is.
struct DomainConfig {
    int domain_id = 1;
    std::array<double, 3> palette_shift{0.0, 0.0, 0.0};  // additive, per channel, in [-0.3, 0.3]
    double noise_sigma = 0.0;
    double object_density = 3.0;  // mean object count per scene
    double illumination_gain = 1.0;  // multiplicative, in [0.5, 1.5]
};

// Class layout of generated scenes.
inline constexpr int kClassSky = 0;
inline constexpr int kClassGround = 1;
inline constexpr int kClassBox = 2;
inline constexpr int kClassDisk = 3;

struct DatasetSpec {
    std::string name = "dataset";
    DomainConfig domain;
    int size = 512;
    TaskSet labeled_tasks{true, true};
    int image_size = 32;  // square images
    int num_classes = 4;  // sky, ground, box, disk
    std::uint64_t seed = 1;

    void validate() const;
};

/// One rendered scene. seg and inv_depth are nullopt in training views of
/// tasks the dataset does not label; the generator itself always produces
/// both.
struct Sample {
    Tensor image;                    // [3,H,W] in [0,1]
    std::optional<IntMap> seg;       // [H,W], values in [0, num_classes)
    std::optional<Tensor> inv_depth; // [1,H,W] in [0,1]; sky pixels exactly 0
};

struct SceneObject {
    enum class Kind { Box, Disk };
    Kind kind = Kind::Box;
    int cx = 0;
    int cy = 0;
    int half_w = 0;  // Disk uses half_w as its radius
    int half_h = 0;
    double inv_depth = 0.0;
    int cls = kClassBox;

    bool covers(int x, int y) const;
};

/// Geometry of one scene before rasterization; deterministic in (seed, index).
struct SceneLayout {
    int horizon_row = 0;
    std::vector<SceneObject> objects;  // sorted far-to-near for painting
};

SceneLayout generate_layout(const DatasetSpec& spec, int index);

/// Paints a layout: sky band with inverse depth exactly 0, ground ramp rising
/// to 1 at the bottom row, objects at constant inverse depth with the nearer
/// object winning overlaps. Then applies the domain knobs to the image.
Sample rasterize(const SceneLayout& layout, const DatasetSpec& spec, int index);

/// generate_layout + rasterize; pure function of (spec.seed, index).
Sample render_scene(const DatasetSpec& spec, int index);

/// Materialized dataset with a masked training view and a sealed evaluation
/// view that always exposes the full ground truth.
class Dataset {
  public:
    static Dataset generate(const DatasetSpec& spec);
    static Dataset from_samples(DatasetSpec spec, std::vector<Sample> samples);

    const DatasetSpec& spec() const { return spec_; }
    int size() const { return static_cast<int>(samples_.size()); }

    /// Ground truth limited to spec.labeled_tasks.
    Sample training_sample(int index) const;

    /// Full ground truth regardless of labeling; for metrics only.
    const Sample& eval_sample(int index) const;

  private:
    DatasetSpec spec_;
    std::vector<Sample> samples_;
};

/// Mini-batch stacked along the batch dimension. seg / inv_depth follow the
/// training view of the originating dataset.
struct Batch {
    int dataset_id = 0;  // 1-based position in the iterator's dataset list
    Tensor images;                    // [N,3,H,W]
    std::optional<IntMap> seg;        // [N,H,W]
    std::optional<Tensor> inv_depth;  // [N,1,H,W]
    std::vector<int> sample_indices;
};

/// Round-robin multi-dataset iterator: datasets are visited in fixed order;
/// within a dataset every sample appears exactly once per epoch, with a
/// reshuffle at each epoch boundary.
class BatchIterator {
  public:
    struct DatasetCursor {
        std::vector<int> perm;
        int pos = 0;
        std::int64_t epoch = 0;
    };
    struct State {
        std::uint64_t rng_state = 0;
        int next_dataset = 0;
        std::vector<DatasetCursor> cursors;
    };

    BatchIterator(std::vector<const Dataset*> datasets, int batch_size, std::uint64_t seed,
                  bool augment_hflip);

    Batch next();

    int num_datasets() const { return static_cast<int>(datasets_.size()); }
    State state() const;
    void restore(const State& state);

  private:
    std::vector<const Dataset*> datasets_;
    int batch_size_;
    bool augment_hflip_;
    Rng rng_;
    int next_dataset_ = 0;
    std::vector<DatasetCursor> cursors_;
};

}  // namespace semimtl
