#include "spigan/tensor.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace spigan {

std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (auto d : s) n *= d;
    return n;
}

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << "]";
    return os.str();
}

Tensor::Tensor(Shape shape, double fill, bool requires_grad) {
    for (auto d : shape) {
        if (d == 0) throw std::invalid_argument("tensor dims must be positive, got " + shape_str(shape));
    }
    s_ = std::make_shared<Storage>();
    s_->shape = std::move(shape);
    s_->data.assign(shape_numel(s_->shape), fill);
    s_->requires_grad = requires_grad;
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data) {
    if (shape_numel(shape) != data.size()) {
        throw std::invalid_argument("data length " + std::to_string(data.size()) +
                                    " does not match shape " + shape_str(shape));
    }
    Tensor t;
    t.s_ = std::make_shared<Storage>();
    t.s_->shape = std::move(shape);
    t.s_->data = std::move(data);
    return t;
}

Tensor Tensor::scalar(double v) { return from_data({1}, {v}); }

std::size_t Tensor::dim(std::size_t i) const {
    if (i >= s_->shape.size()) throw std::out_of_range("tensor dim index out of range");
    return s_->shape[i];
}

double Tensor::item() const {
    if (size() != 1) throw std::invalid_argument("item() on non-scalar tensor " + shape_str(shape()));
    return s_->data[0];
}

std::vector<double>& Tensor::grad() {
    if (s_->grad.empty()) s_->grad.assign(s_->data.size(), 0.0);
    return s_->grad;
}

const std::vector<double>& Tensor::grad() const {
    if (s_->grad.empty()) throw std::logic_error("tensor has no gradient buffer");
    return s_->grad;
}

void Tensor::zero_grad() { s_->grad.assign(s_->data.size(), 0.0); }

void Tensor::drop_grad() {
    s_->grad.clear();
    s_->grad.shrink_to_fit();
}

Tensor Tensor::clone() const {
    Tensor t;
    t.s_ = std::make_shared<Storage>();
    t.s_->shape = s_->shape;
    t.s_->data = s_->data;
    t.s_->requires_grad = s_->requires_grad;
    return t;
}

bool Tensor::all_finite() const {
    for (double v : s_->data) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

LabelMap::LabelMap(Shape s, std::int32_t fill) : shape(std::move(s)) {
    v.assign(shape_numel(shape), fill);
}

namespace {

constexpr char kMagic[8] = {'S', 'P', 'G', 'T', 'E', 'N', 'S', '1'};

void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw std::runtime_error("truncated tensor stream");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void put_f64(std::ostream& os, double v) {
    std::uint64_t u;
    std::memcpy(&u, &v, 8);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(u >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 8);
}

double get_f64(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    if (!is) throw std::runtime_error("truncated tensor stream");
    std::uint64_t u = 0;
    for (int i = 0; i < 8; ++i) u |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    double v;
    std::memcpy(&v, &u, 8);
    return v;
}

} // namespace

void save_tensor(const Tensor& t, std::ostream& os) {
    os.write(kMagic, 8);
    put_u32(os, static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) put_u32(os, static_cast<std::uint32_t>(d));
    for (double v : t.data()) put_f64(os, v);
}

Tensor load_tensor(std::istream& is) {
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, kMagic, 8) != 0) throw std::runtime_error("bad tensor magic");
    std::uint32_t rank = get_u32(is);
    if (rank > 8) throw std::runtime_error("implausible tensor rank " + std::to_string(rank));
    Shape shape(rank);
    for (auto& d : shape) d = get_u32(is);
    std::vector<double> data(shape_numel(shape));
    for (auto& v : data) v = get_f64(is);
    return Tensor::from_data(std::move(shape), std::move(data));
}

void save_tensor_file(const Tensor& t, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open " + path + " for writing");
    save_tensor(t, os);
}

Tensor load_tensor_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open " + path);
    return load_tensor(is);
}

} // namespace spigan
