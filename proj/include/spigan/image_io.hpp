#pragma once

#include <string>

#include "spigan/tensor.hpp"

namespace spigan {

// Binary netpbm I/O. Images map [-1,1] <-> 8-bit P6; labels are 8-bit P5;
// inverse depth maps [0,1] <-> 16-bit big-endian P5. All round-trip
// bit-exactly at file level.
void write_ppm(const std::string& path, const Tensor& image);   // [3,H,W] in [-1,1]
Tensor read_ppm(const std::string& path);

void write_pgm8(const std::string& path, const LabelMap& labels); // [H,W]
LabelMap read_pgm8(const std::string& path);

void write_pgm16(const std::string& path, const Tensor& depth); // [1,H,W] in [0,1]
Tensor read_pgm16(const std::string& path);

} // namespace spigan
