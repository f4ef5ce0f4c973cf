#pragma once

#include <cstdint>
#include <iosfwd>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace dlaseg {

class ShapeError : public std::runtime_error {
public:
    explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

class ContractError : public std::runtime_error {
public:
    explicit ContractError(const std::string& msg) : std::runtime_error(msg) {}
};

class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& msg, std::size_t byte_offset)
        : std::runtime_error(msg + " (byte " + std::to_string(byte_offset) + ")"),
          offset(byte_offset) {}
    std::size_t offset;
};

/// Storage precision used when tensors are written to disk. Computation is
/// always carried out in double; f32 affects serialization only.
enum class Dtype : std::uint8_t { f64 = 0, f32 = 1 };

Dtype default_save_dtype();
void set_default_save_dtype(Dtype d);

/// Dense row-major tensor of doubles. Feature maps use NCHW order.
struct Tensor {
    std::vector<std::size_t> dims;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> d, double fill = 0.0)
        : dims(std::move(d)),
          data(product(dims), fill) {
        for (std::size_t v : dims)
            if (v == 0) throw ShapeError("tensor dims must all be >= 1");
    }

    static std::size_t product(const std::vector<std::size_t>& d) {
        std::size_t p = 1;
        for (std::size_t v : d) p *= v;
        return p;
    }

    std::size_t size() const { return data.size(); }
    std::size_t ndim() const { return dims.size(); }

    // NCHW accessors; only valid for 4-d tensors.
    std::size_t n() const { return dims.at(0); }
    std::size_t c() const { return dims.at(1); }
    std::size_t h() const { return dims.at(2); }
    std::size_t w() const { return dims.at(3); }

    double& at4(std::size_t i, std::size_t j, std::size_t y, std::size_t x) {
        return data[((i * dims[1] + j) * dims[2] + y) * dims[3] + x];
    }
    double at4(std::size_t i, std::size_t j, std::size_t y, std::size_t x) const {
        return data[((i * dims[1] + j) * dims[2] + y) * dims[3] + x];
    }

    bool same_shape(const Tensor& o) const { return dims == o.dims; }
    bool operator==(const Tensor&) const = default;

    std::string shape_str() const;

    Tensor& operator+=(const Tensor& o);
    Tensor& operator*=(double s);

    /// Fill with samples from N(0, std^2) using the given engine.
    void fill_normal(std::mt19937_64& rng, double stddev);
    void fill_uniform(std::mt19937_64& rng, double lo, double hi);
};

void require_same_shape(const Tensor& a, const Tensor& b, const char* what);

/// Deterministic standard-normal draw (Box-Muller, one value per call).
double draw_normal(std::mt19937_64& rng);
double draw_uniform(std::mt19937_64& rng, double lo, double hi);

/// Stable per-sample stream derivation: hash of (seed, index).
std::uint64_t derive_stream(std::uint64_t seed, std::uint64_t index);

// Binary tensor format: magic "DLAT", version u16, dtype u8, ndim u8,
// dims u64 LE each, raw LE payload.
void write_tensor(std::ostream& os, const Tensor& t, Dtype dtype);
void write_tensor(std::ostream& os, const Tensor& t);
Tensor read_tensor(std::istream& is);

}  // namespace dlaseg
