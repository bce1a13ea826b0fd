#pragma once

#include <string>

#include "spigan/toysim.hpp"

namespace spigan {

// On-disk dataset layout: img_#####.ppm, lab_#####.pgm, dep_#####.pgm plus a
// manifest.json carrying the config, seed, counts and a content hash over the
// sample files.
void write_dataset(const Dataset& ds, const std::string& dir);
Dataset load_dataset(const std::string& dir);

// Hash over the sample files (manifest excluded), sorted by name.
std::string dataset_content_hash(const std::string& dir);

// Renders n scenes, optionally across threads; per-index seeding keeps the
// result identical to the sequential path.
Dataset render_dataset(const DomainConfig& cfg, int n, std::uint64_t seed, bool labels_eval_only,
                       int threads);

} // namespace spigan
