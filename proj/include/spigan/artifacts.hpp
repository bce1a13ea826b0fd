#pragma once

#include <map>
#include <string>
#include <vector>

#include "spigan/tensor.hpp"

namespace spigan {

std::string sha256_hex(const void* data, std::size_t len);
std::string sha256_file(const std::string& path);
// Hash of (relative name, bytes) pairs in sorted-name order.
std::string sha256_files(const std::vector<std::pair<std::string, std::string>>& named_paths);

// Checkpoint archive: magic "SPGCKPT1", u32 tensor count, then per tensor a
// u32 name length, the name, and an SPGTENS1 blob. A JSON manifest with the
// tensor shapes, network specs and seed sits next to it as <path>.json.
void save_checkpoint(const std::string& path, const std::map<std::string, Tensor>& tensors,
                     const std::string& manifest_json);
std::map<std::string, Tensor> load_checkpoint(const std::string& path);
std::string load_checkpoint_manifest(const std::string& path);

// Append-oriented CSV writer with deterministic float formatting.
class CsvLogger {
public:
    CsvLogger() = default;
    CsvLogger(const std::string& path, const std::vector<std::string>& columns);
    void row(const std::vector<double>& values);
    void flush();
    const std::string& path() const { return path_; }

private:
    std::string path_;
    std::string buffer_;
    std::size_t n_columns_ = 0;
};

std::string format_double(double v); // shortest round-trip-exact form

void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

} // namespace spigan
