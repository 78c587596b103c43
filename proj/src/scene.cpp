#include "semimtl/scene.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace semimtl {

namespace {

constexpr std::array<std::array<double, 3>, 4> kPalette = {{
    {0.30, 0.55, 0.95},  // sky
    {0.30, 0.60, 0.25},  // ground
    {0.80, 0.30, 0.25},  // box
    {0.95, 0.55, 0.20},  // disk
}};

double clamp01(double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

}  // namespace

const char* task_name(TaskId t) { return t == TaskId::Seg ? "seg" : "depth"; }

void DatasetSpec::validate() const {
    if (name.empty()) {
        throw std::invalid_argument("DatasetSpec: name must be non-empty");
    }
    if (size < 1) {
        throw std::invalid_argument("DatasetSpec '" + name + "': size must be >= 1");
    }
    if (labeled_tasks.empty()) {
        throw std::invalid_argument("DatasetSpec '" + name + "': labeled_tasks must be non-empty");
    }
    if (image_size < 8) {
        throw std::invalid_argument("DatasetSpec '" + name + "': image_size must be >= 8");
    }
    if (num_classes < 2) {
        throw std::invalid_argument("DatasetSpec '" + name + "': num_classes must be >= 2");
    }
    if (domain.object_density > 0.0 && num_classes < 4) {
        throw std::invalid_argument("DatasetSpec '" + name +
                                    "': scenes with objects use 4 classes (sky, ground, box, disk)");
    }
    if (domain.domain_id < 1) {
        throw std::invalid_argument("DatasetSpec '" + name + "': domain_id must be >= 1");
    }
    if (domain.object_density < 0.0) {
        throw std::invalid_argument("DatasetSpec '" + name + "': object_density must be >= 0");
    }
    if (domain.noise_sigma < 0.0) {
        throw std::invalid_argument("DatasetSpec '" + name + "': noise_sigma must be >= 0");
    }
    if (domain.illumination_gain < 0.5 || domain.illumination_gain > 1.5) {
        throw std::invalid_argument("DatasetSpec '" + name + "': illumination_gain must be in [0.5, 1.5]");
    }
    for (double s : domain.palette_shift) {
        if (s < -0.3 || s > 0.3) {
            throw std::invalid_argument("DatasetSpec '" + name + "': palette_shift must be in [-0.3, 0.3]");
        }
    }
}

bool SceneObject::covers(int x, int y) const {
    if (kind == Kind::Box) {
        return std::abs(x - cx) <= half_w && std::abs(y - cy) <= half_h;
    }
    const double dx = x - cx;
    const double dy = y - cy;
    return dx * dx + dy * dy <= static_cast<double>(half_w) * half_w;
}

SceneLayout generate_layout(const DatasetSpec& spec, int index) {
    if (index < 0 || index >= spec.size) {
        throw std::out_of_range("generate_layout: index " + std::to_string(index) + " out of range [0," +
                                std::to_string(spec.size) + ")");
    }
    Rng rng = Rng::stream(spec.seed, "layout", static_cast<std::uint64_t>(index));
    const int h = spec.image_size;
    const int w = spec.image_size;

    SceneLayout layout;
    layout.horizon_row = static_cast<int>(std::lround(h * rng.uniform(0.25, 0.45)));
    layout.horizon_row = std::clamp(layout.horizon_row, 1, h - 2);

    const int count = rng.poisson(spec.domain.object_density);
    const int max_half = std::max(2, h / 8);
    layout.objects.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        SceneObject obj;
        obj.kind = rng.bernoulli(0.5) ? SceneObject::Kind::Box : SceneObject::Kind::Disk;
        obj.cx = rng.uniform_int(w);
        obj.cy = rng.uniform_int(h);
        obj.half_w = 2 + rng.uniform_int(max_half - 1);
        obj.half_h = obj.kind == SceneObject::Kind::Box ? 2 + rng.uniform_int(max_half - 1) : obj.half_w;
        // Inverse depth in (0.2, 0.9), class-conditioned: boxes sit far,
        // disks near, so class identity carries depth information.
        obj.inv_depth = obj.kind == SceneObject::Kind::Box ? rng.uniform(0.22, 0.5) : rng.uniform(0.6, 0.88);
        obj.cls = obj.kind == SceneObject::Kind::Box ? kClassBox : kClassDisk;
        layout.objects.push_back(obj);
    }
    // Far-to-near painting order; the nearer object overwrites overlaps.
    std::stable_sort(layout.objects.begin(), layout.objects.end(),
                     [](const SceneObject& a, const SceneObject& b) { return a.inv_depth < b.inv_depth; });
    return layout;
}

Sample rasterize(const SceneLayout& layout, const DatasetSpec& spec, int index) {
    const int h = spec.image_size;
    const int w = spec.image_size;
    const std::int64_t plane = static_cast<std::int64_t>(h) * w;

    IntMap seg = IntMap::zeros({h, w});
    Tensor inv = Tensor::zeros({1, h, w});
    auto inv_v = inv.values_mut();

    const int horizon = layout.horizon_row;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const std::int64_t p = static_cast<std::int64_t>(y) * w + x;
            if (y < horizon) {
                seg.v[static_cast<std::size_t>(p)] = kClassSky;
                inv_v[static_cast<std::size_t>(p)] = 0.0;
            } else {
                seg.v[static_cast<std::size_t>(p)] = kClassGround;
                // Strictly positive at the first ground row, exactly 1 at the
                // bottom row.
                inv_v[static_cast<std::size_t>(p)] =
                    static_cast<double>(y - horizon + 1) / static_cast<double>(h - horizon);
            }
        }
    }
    for (const SceneObject& obj : layout.objects) {
        const int y0 = std::max(0, obj.cy - obj.half_h);
        const int y1 = std::min(h - 1, obj.cy + obj.half_h);
        const int x0 = std::max(0, obj.cx - obj.half_w);
        const int x1 = std::min(w - 1, obj.cx + obj.half_w);
        for (int y = y0; y <= y1; ++y) {
            for (int x = x0; x <= x1; ++x) {
                if (obj.covers(x, y)) {
                    const std::size_t p = static_cast<std::size_t>(static_cast<std::int64_t>(y) * w + x);
                    seg.v[p] = obj.cls;
                    inv_v[p] = obj.inv_depth;
                }
            }
        }
    }

    // Image: class palette shaded by inverse depth, then the domain knobs.
    Tensor image = Tensor::zeros({3, h, w});
    auto img = image.values_mut();
    Rng noise = Rng::stream(spec.seed, "noise", static_cast<std::uint64_t>(index));
    const DomainConfig& dom = spec.domain;
    for (std::int64_t p = 0; p < plane; ++p) {
        const int cls = seg.v[static_cast<std::size_t>(p)];
        const double shade = 1.0 - 0.55 * inv_v[static_cast<std::size_t>(p)];
        for (int c = 0; c < 3; ++c) {
            const double base = kPalette[static_cast<std::size_t>(cls)][static_cast<std::size_t>(c)] * shade;
            const double v = base * dom.illumination_gain + dom.palette_shift[static_cast<std::size_t>(c)] +
                             dom.noise_sigma * noise.normal();
            img[static_cast<std::size_t>(c * plane + p)] = clamp01(v);
        }
    }

    Sample s;
    s.image = image;
    s.seg = std::move(seg);
    s.inv_depth = inv;
    return s;
}

Sample render_scene(const DatasetSpec& spec, int index) {
    return rasterize(generate_layout(spec, index), spec, index);
}

Dataset Dataset::generate(const DatasetSpec& spec) {
    spec.validate();
    Dataset ds;
    ds.spec_ = spec;
    ds.samples_.reserve(static_cast<std::size_t>(spec.size));
    for (int i = 0; i < spec.size; ++i) {
        ds.samples_.push_back(render_scene(spec, i));
    }
    return ds;
}

Dataset Dataset::from_samples(DatasetSpec spec, std::vector<Sample> samples) {
    spec.validate();
    if (static_cast<int>(samples.size()) != spec.size) {
        throw std::invalid_argument("Dataset::from_samples: sample count does not match spec.size");
    }
    Dataset ds;
    ds.spec_ = std::move(spec);
    ds.samples_ = std::move(samples);
    return ds;
}

Sample Dataset::training_sample(int index) const {
    const Sample& full = eval_sample(index);
    Sample s;
    s.image = full.image;
    if (spec_.labeled_tasks.seg) {
        s.seg = full.seg;
    }
    if (spec_.labeled_tasks.depth) {
        s.inv_depth = full.inv_depth;
    }
    return s;
}

const Sample& Dataset::eval_sample(int index) const {
    if (index < 0 || index >= size()) {
        throw std::out_of_range("Dataset: sample index " + std::to_string(index) + " out of range");
    }
    return samples_[static_cast<std::size_t>(index)];
}

BatchIterator::BatchIterator(std::vector<const Dataset*> datasets, int batch_size, std::uint64_t seed,
                             bool augment_hflip)
    : datasets_(std::move(datasets)),
      batch_size_(batch_size),
      augment_hflip_(augment_hflip),
      rng_(Rng::stream(seed, "batch")) {
    if (datasets_.empty()) {
        throw std::invalid_argument("BatchIterator: need at least one dataset");
    }
    if (batch_size_ < 1) {
        throw std::invalid_argument("BatchIterator: batch size must be >= 1");
    }
    for (const Dataset* ds : datasets_) {
        if (batch_size_ > ds->size()) {
            throw std::invalid_argument("BatchIterator: batch size " + std::to_string(batch_size_) +
                                        " exceeds dataset '" + ds->spec().name + "' size " +
                                        std::to_string(ds->size()));
        }
    }
    cursors_.resize(datasets_.size());
}

Batch BatchIterator::next() {
    const int ds_index = next_dataset_;
    next_dataset_ = (next_dataset_ + 1) % static_cast<int>(datasets_.size());

    const Dataset& ds = *datasets_[static_cast<std::size_t>(ds_index)];
    DatasetCursor& cur = cursors_[static_cast<std::size_t>(ds_index)];

    std::vector<int> indices;
    indices.reserve(static_cast<std::size_t>(batch_size_));
    for (int i = 0; i < batch_size_; ++i) {
        if (cur.pos >= static_cast<int>(cur.perm.size())) {
            // Epoch boundary: reshuffle.
            cur.perm.resize(static_cast<std::size_t>(ds.size()));
            for (int j = 0; j < ds.size(); ++j) {
                cur.perm[static_cast<std::size_t>(j)] = j;
            }
            for (int j = ds.size() - 1; j > 0; --j) {
                const int k = rng_.uniform_int(j + 1);
                std::swap(cur.perm[static_cast<std::size_t>(j)], cur.perm[static_cast<std::size_t>(k)]);
            }
            cur.pos = 0;
            ++cur.epoch;
        }
        indices.push_back(cur.perm[static_cast<std::size_t>(cur.pos++)]);
    }

    const int h = ds.spec().image_size;
    const int w = ds.spec().image_size;
    const std::int64_t plane = static_cast<std::int64_t>(h) * w;
    const bool want_seg = ds.spec().labeled_tasks.seg;
    const bool want_depth = ds.spec().labeled_tasks.depth;

    Batch batch;
    batch.dataset_id = ds_index + 1;
    batch.sample_indices = indices;
    batch.images = Tensor::zeros({batch_size_, 3, h, w});
    if (want_seg) {
        batch.seg = IntMap::zeros({batch_size_, h, w});
    }
    if (want_depth) {
        batch.inv_depth = Tensor::zeros({batch_size_, 1, h, w});
    }

    auto img_out = batch.images.values_mut();
    for (int bi = 0; bi < batch_size_; ++bi) {
        const Sample s = ds.training_sample(indices[static_cast<std::size_t>(bi)]);
        const bool flip = augment_hflip_ && rng_.bernoulli(0.5);
        auto src_x = [&](int x) { return flip ? (w - 1 - x) : x; };
        const auto img_in = s.image.values();
        for (int c = 0; c < 3; ++c) {
            for (int y = 0; y < h; ++y) {
                for (int x = 0; x < w; ++x) {
                    img_out[static_cast<std::size_t>(((static_cast<std::int64_t>(bi) * 3 + c) * h + y) * w + x)] =
                        img_in[static_cast<std::size_t>((static_cast<std::int64_t>(c) * h + y) * w + src_x(x))];
                }
            }
        }
        if (want_seg) {
            for (int y = 0; y < h; ++y) {
                for (int x = 0; x < w; ++x) {
                    batch.seg->v[static_cast<std::size_t>((static_cast<std::int64_t>(bi) * h + y) * w + x)] =
                        s.seg->v[static_cast<std::size_t>(static_cast<std::int64_t>(y) * w + src_x(x))];
                }
            }
        }
        if (want_depth) {
            auto dep_out = batch.inv_depth->values_mut();
            const auto dep_in = s.inv_depth->values();
            for (int y = 0; y < h; ++y) {
                for (int x = 0; x < w; ++x) {
                    dep_out[static_cast<std::size_t>(static_cast<std::int64_t>(bi) * plane + y * w + x)] =
                        dep_in[static_cast<std::size_t>(static_cast<std::int64_t>(y) * w + src_x(x))];
                }
            }
        }
    }
    return batch;
}

BatchIterator::State BatchIterator::state() const {
    State s;
    s.rng_state = rng_.state();
    s.next_dataset = next_dataset_;
    s.cursors = cursors_;
    return s;
}

void BatchIterator::restore(const State& state) {
    if (state.cursors.size() != cursors_.size()) {
        throw std::invalid_argument("BatchIterator::restore: cursor count mismatch");
    }
    rng_.set_state(state.rng_state);
    next_dataset_ = state.next_dataset;
    cursors_ = state.cursors;
}

}  // namespace semimtl
