#pragma once

#include <filesystem>

#include "semimtl/scene.hpp"
#include "semimtl/tensor.hpp"

namespace semimtl {

// Binary tensor files: little-endian uint32 rank, then rank uint32 dims, then
// the row-major payload — 64-bit floats for value tensors, 32-bit signed
// integers for label maps. The surrounding manifest records which file is
// which.

void write_tensor_file(const std::filesystem::path& path, const Tensor& t);
Tensor read_tensor_file(const std::filesystem::path& path);

void write_intmap_file(const std::filesystem::path& path, const IntMap& m);
IntMap read_intmap_file(const std::filesystem::path& path);

/// Writes every sample (full ground truth) plus manifest.json describing the
/// spec, the seed, and the file list.
void write_dataset_dir(const std::filesystem::path& dir, const Dataset& dataset);
Dataset read_dataset_dir(const std::filesystem::path& dir);

}  // namespace semimtl
