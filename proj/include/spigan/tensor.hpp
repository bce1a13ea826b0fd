#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

namespace spigan {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

// Dense 64-bit float tensor with an optional gradient buffer. Copies are
// shallow: parameter tensors are shared between a ParamSet and the layers
// that use them. Image data uses N,C,H,W ordering.
class Tensor {
public:
    struct Storage {
        Shape shape;
        std::vector<double> data;
        std::vector<double> grad; // empty until a backward pass touches it
        bool requires_grad = false;
    };

    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0, bool requires_grad = false);
    static Tensor from_data(Shape shape, std::vector<double> data);
    static Tensor scalar(double v);

    bool defined() const { return s_ != nullptr; }
    const Shape& shape() const { return s_->shape; }
    std::size_t rank() const { return s_->shape.size(); }
    std::size_t dim(std::size_t i) const;
    std::size_t size() const { return s_->data.size(); }

    std::vector<double>& data() { return s_->data; }
    const std::vector<double>& data() const { return s_->data; }
    double item() const; // scalar tensors only

    bool requires_grad() const { return s_->requires_grad; }
    void set_requires_grad(bool b) { s_->requires_grad = b; }

    bool has_grad() const { return !s_->grad.empty(); }
    std::vector<double>& grad();             // allocates zeros on first use
    const std::vector<double>& grad() const; // throws if absent
    void zero_grad();
    void drop_grad();

    Tensor clone() const; // deep copy of data (grad not copied)
    bool all_finite() const;

    Storage* storage() const { return s_.get(); }
    bool same_storage(const Tensor& other) const { return s_ == other.s_; }

private:
    std::shared_ptr<Storage> s_;
};

// Integer class-index map (labels), [N,H,W] or [H,W]. 255 marks ignored pixels.
struct LabelMap {
    Shape shape;
    std::vector<std::int32_t> v;

    LabelMap() = default;
    LabelMap(Shape s, std::int32_t fill = 0);
    std::size_t size() const { return v.size(); }
};

inline constexpr std::int32_t kIgnoreLabel = 255;

// Flat binary tensor format: 8-byte magic "SPGTENS1", u32 rank, u32 dims,
// little-endian f64 payload.
void save_tensor(const Tensor& t, std::ostream& os);
Tensor load_tensor(std::istream& is);
void save_tensor_file(const Tensor& t, const std::string& path);
Tensor load_tensor_file(const std::string& path);

} // namespace spigan
