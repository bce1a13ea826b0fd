#include "spigan/artifacts.hpp"

#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <openssl/evp.h>

namespace spigan {

std::string sha256_hex(const void* data, std::size_t len) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int dlen = 0;
    if (EVP_Digest(data, len, digest, &dlen, EVP_sha256(), nullptr) != 1) {
        throw std::runtime_error("sha256 failed");
    }
    static const char* hex = "0123456789abcdef";
    std::string out;
    out.reserve(2 * dlen);
    for (unsigned int i = 0; i < dlen; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 0xf]);
    }
    return out;
}

std::string read_text_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open " + path);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open " + path + " for writing");
    os << content;
}

std::string sha256_file(const std::string& path) {
    const std::string bytes = read_text_file(path);
    return sha256_hex(bytes.data(), bytes.size());
}

std::string sha256_files(const std::vector<std::pair<std::string, std::string>>& named_paths) {
    auto sorted = named_paths;
    std::sort(sorted.begin(), sorted.end());
    std::string acc;
    for (const auto& [name, path] : sorted) {
        acc += name;
        acc += '\0';
        acc += read_text_file(path);
        acc += '\0';
    }
    return sha256_hex(acc.data(), acc.size());
}

namespace {

constexpr char kCkptMagic[8] = {'S', 'P', 'G', 'C', 'K', 'P', 'T', '1'};

void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw std::runtime_error("truncated checkpoint");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

} // namespace

void save_checkpoint(const std::string& path, const std::map<std::string, Tensor>& tensors,
                     const std::string& manifest_json) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open " + path + " for writing");
    os.write(kCkptMagic, 8);
    put_u32(os, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& [name, t] : tensors) {
        put_u32(os, static_cast<std::uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        save_tensor(t, os);
    }
    if (!os) throw std::runtime_error("failed writing checkpoint " + path);
    write_text_file(path + ".json", manifest_json);
}

std::map<std::string, Tensor> load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open " + path);
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, kCkptMagic, 8) != 0) {
        throw std::runtime_error(path + " is not a checkpoint archive");
    }
    const std::uint32_t count = get_u32(is);
    std::map<std::string, Tensor> out;
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint32_t name_len = get_u32(is);
        std::string name(name_len, '\0');
        is.read(name.data(), name_len);
        if (!is) throw std::runtime_error("truncated checkpoint");
        out.emplace(std::move(name), load_tensor(is));
    }
    return out;
}

std::string load_checkpoint_manifest(const std::string& path) {
    return read_text_file(path + ".json");
}

std::string format_double(double v) {
    char buf[40];
    auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc()) throw std::runtime_error("to_chars failed");
    return std::string(buf, p);
}

CsvLogger::CsvLogger(const std::string& path, const std::vector<std::string>& columns)
    : path_(path), n_columns_(columns.size()) {
    std::string header;
    for (std::size_t i = 0; i < columns.size(); ++i) {
        header += (i ? "," : "") + columns[i];
    }
    header += '\n';
    std::ofstream os(path_, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open " + path_ + " for writing");
    os << header;
}

void CsvLogger::row(const std::vector<double>& values) {
    if (values.size() != n_columns_) throw std::invalid_argument("csv row arity mismatch");
    for (std::size_t i = 0; i < values.size(); ++i) {
        buffer_ += (i ? "," : "");
        buffer_ += format_double(values[i]);
    }
    buffer_ += '\n';
    if (buffer_.size() > (1u << 16)) flush();
}

void CsvLogger::flush() {
    if (buffer_.empty()) return;
    std::ofstream os(path_, std::ios::binary | std::ios::app);
    if (!os) throw std::runtime_error("cannot append to " + path_);
    os << buffer_;
    buffer_.clear();
}

} // namespace spigan
