#include "semimtl/tensor_io.hpp"

#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "semimtl/json_io.hpp"

namespace semimtl {

namespace {

constexpr int kDatasetSchemaVersion = 1;

void put_u32_le(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xFF), static_cast<unsigned char>((v >> 8) & 0xFF),
                          static_cast<unsigned char>((v >> 16) & 0xFF),
                          static_cast<unsigned char>((v >> 24) & 0xFF)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32_le(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void put_u64_le(std::ostream& os, std::uint64_t v) {
    put_u32_le(os, static_cast<std::uint32_t>(v & 0xFFFFFFFFULL));
    put_u32_le(os, static_cast<std::uint32_t>(v >> 32));
}

std::uint64_t get_u64_le(std::istream& is) {
    const std::uint64_t lo = get_u32_le(is);
    const std::uint64_t hi = get_u32_le(is);
    return lo | (hi << 32);
}

std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) {
        throw std::runtime_error("cannot open '" + path.string() + "' for writing");
    }
    return os;
}

std::ifstream open_in(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw std::runtime_error("cannot open '" + path.string() + "' for reading");
    }
    return is;
}

Shape read_header(std::istream& is, const std::filesystem::path& path) {
    const std::uint32_t rank = get_u32_le(is);
    if (!is || rank > 4) {
        throw std::runtime_error("'" + path.string() + "': bad tensor header (rank " + std::to_string(rank) + ")");
    }
    Shape shape(rank);
    for (std::uint32_t i = 0; i < rank; ++i) {
        const std::uint32_t d = get_u32_le(is);
        if (!is || d == 0 || d > (1u << 24)) {
            throw std::runtime_error("'" + path.string() + "': bad tensor dimension");
        }
        shape[i] = static_cast<int>(d);
    }
    return shape;
}

std::string sample_stem(int index) {
    std::ostringstream os;
    os << "sample_" << std::setw(5) << std::setfill('0') << index;
    return os.str();
}

}  // namespace

void write_tensor_file(const std::filesystem::path& path, const Tensor& t) {
    auto os = open_out(path);
    put_u32_le(os, static_cast<std::uint32_t>(t.rank()));
    for (int i = 0; i < t.rank(); ++i) {
        put_u32_le(os, static_cast<std::uint32_t>(t.dim(i)));
    }
    for (double v : t.values()) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, sizeof bits);
        put_u64_le(os, bits);
    }
    if (!os) {
        throw std::runtime_error("failed writing '" + path.string() + "'");
    }
}

Tensor read_tensor_file(const std::filesystem::path& path) {
    auto is = open_in(path);
    const Shape shape = read_header(is, path);
    std::vector<double> values(static_cast<std::size_t>(shape_numel(shape)));
    for (double& v : values) {
        const std::uint64_t bits = get_u64_le(is);
        std::memcpy(&v, &bits, sizeof v);
    }
    if (!is) {
        throw std::runtime_error("'" + path.string() + "': truncated tensor payload");
    }
    return Tensor(shape, std::move(values));
}

void write_intmap_file(const std::filesystem::path& path, const IntMap& m) {
    auto os = open_out(path);
    put_u32_le(os, static_cast<std::uint32_t>(m.shape.size()));
    for (int d : m.shape) {
        put_u32_le(os, static_cast<std::uint32_t>(d));
    }
    for (std::int32_t v : m.v) {
        put_u32_le(os, static_cast<std::uint32_t>(v));
    }
    if (!os) {
        throw std::runtime_error("failed writing '" + path.string() + "'");
    }
}

IntMap read_intmap_file(const std::filesystem::path& path) {
    auto is = open_in(path);
    const Shape shape = read_header(is, path);
    std::vector<std::int32_t> values(static_cast<std::size_t>(shape_numel(shape)));
    for (std::int32_t& v : values) {
        v = static_cast<std::int32_t>(get_u32_le(is));
    }
    if (!is) {
        throw std::runtime_error("'" + path.string() + "': truncated label payload");
    }
    return IntMap(shape, std::move(values));
}

void write_dataset_dir(const std::filesystem::path& dir, const Dataset& dataset) {
    std::filesystem::create_directories(dir);
    nlohmann::json files = nlohmann::json::array();
    for (int i = 0; i < dataset.size(); ++i) {
        const Sample& s = dataset.eval_sample(i);
        const std::string stem = sample_stem(i);
        nlohmann::json entry;
        entry["image"] = stem + "_image.bin";
        write_tensor_file(dir / (stem + "_image.bin"), s.image);
        if (s.seg) {
            entry["seg"] = stem + "_seg.bin";
            write_intmap_file(dir / (stem + "_seg.bin"), *s.seg);
        }
        if (s.inv_depth) {
            entry["inv_depth"] = stem + "_inv_depth.bin";
            write_tensor_file(dir / (stem + "_inv_depth.bin"), *s.inv_depth);
        }
        files.push_back(entry);
    }
    nlohmann::json manifest;
    manifest["schema_version"] = kDatasetSchemaVersion;
    manifest["spec"] = dataset.spec();
    manifest["samples"] = files;
    auto os = open_out(dir / "manifest.json");
    os << canonical_json(manifest);
}

Dataset read_dataset_dir(const std::filesystem::path& dir) {
    auto is = open_in(dir / "manifest.json");
    nlohmann::json manifest = nlohmann::json::parse(is);
    if (manifest.value("schema_version", 0) != kDatasetSchemaVersion) {
        throw std::runtime_error("'" + (dir / "manifest.json").string() + "': unsupported schema_version");
    }
    DatasetSpec spec = manifest.at("spec").get<DatasetSpec>();
    std::vector<Sample> samples;
    for (const auto& entry : manifest.at("samples")) {
        Sample s;
        s.image = read_tensor_file(dir / entry.at("image").get<std::string>());
        if (entry.contains("seg")) {
            s.seg = read_intmap_file(dir / entry.at("seg").get<std::string>());
        }
        if (entry.contains("inv_depth")) {
            s.inv_depth = read_tensor_file(dir / entry.at("inv_depth").get<std::string>());
        }
        samples.push_back(std::move(s));
    }
    return Dataset::from_samples(std::move(spec), std::move(samples));
}

}  // namespace semimtl
