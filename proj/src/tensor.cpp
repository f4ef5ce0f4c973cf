#include "dlaseg/tensor.hpp"

#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>
#include <sstream>

namespace dlaseg {

namespace {
Dtype g_save_dtype = Dtype::f64;
}

Dtype default_save_dtype() { return g_save_dtype; }
void set_default_save_dtype(Dtype d) { g_save_dtype = d; }

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < dims.size(); ++i) {
        if (i) os << 'x';
        os << dims[i];
    }
    os << ']';
    return os.str();
}

Tensor& Tensor::operator+=(const Tensor& o) {
    require_same_shape(*this, o, "tensor add");
    for (std::size_t i = 0; i < data.size(); ++i) data[i] += o.data[i];
    return *this;
}

Tensor& Tensor::operator*=(double s) {
    for (double& v : data) v *= s;
    return *this;
}

void Tensor::fill_normal(std::mt19937_64& rng, double stddev) {
    for (double& v : data) v = stddev * draw_normal(rng);
}

void Tensor::fill_uniform(std::mt19937_64& rng, double lo, double hi) {
    for (double& v : data) v = draw_uniform(rng, lo, hi);
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (!a.same_shape(b))
        throw ShapeError(std::string(what) + ": shape mismatch " + a.shape_str() +
                         " vs " + b.shape_str());
}

double draw_uniform(std::mt19937_64& rng, double lo, double hi) {
    // 53-bit mantissa draw; avoids implementation-defined distribution state.
    double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    return lo + u * (hi - lo);
}

double draw_normal(std::mt19937_64& rng) {
    double u1 = 0.0;
    do {
        u1 = draw_uniform(rng, 0.0, 1.0);
    } while (u1 <= 0.0);
    double u2 = draw_uniform(rng, 0.0, 1.0);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

std::uint64_t derive_stream(std::uint64_t seed, std::uint64_t index) {
    // splitmix64 over the combined key
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

namespace {

constexpr char kMagic[4] = {'D', 'L', 'A', 'T'};
constexpr std::uint16_t kVersion = 1;

template <typename T>
void write_le(std::ostream& os, T v) {
    unsigned char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    os.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T read_le(std::istream& is, std::size_t& off) {
    unsigned char buf[sizeof(T)];
    is.read(reinterpret_cast<char*>(buf), sizeof(T));
    if (!is) throw ParseError("unexpected end of tensor stream", off);
    off += sizeof(T);
    T v;
    std::memcpy(&v, buf, sizeof(T));
    return v;
}

}  // namespace

void write_tensor(std::ostream& os, const Tensor& t, Dtype dtype) {
    os.write(kMagic, 4);
    write_le<std::uint16_t>(os, kVersion);
    write_le<std::uint8_t>(os, static_cast<std::uint8_t>(dtype));
    write_le<std::uint8_t>(os, static_cast<std::uint8_t>(t.dims.size()));
    for (std::size_t d : t.dims) write_le<std::uint64_t>(os, d);
    if (dtype == Dtype::f64) {
        for (double v : t.data) write_le<double>(os, v);
    } else {
        for (double v : t.data) write_le<float>(os, static_cast<float>(v));
    }
}

void write_tensor(std::ostream& os, const Tensor& t) {
    write_tensor(os, t, g_save_dtype);
}

Tensor read_tensor(std::istream& is) {
    std::size_t off = 0;
    char magic[4];
    is.read(magic, 4);
    if (!is) throw ParseError("tensor stream too short for magic", 0);
    off += 4;
    if (std::memcmp(magic, kMagic, 4) != 0)
        throw ParseError("bad tensor magic", 0);
    auto version = read_le<std::uint16_t>(is, off);
    if (version != kVersion)
        throw ParseError("unsupported tensor version " + std::to_string(version), 4);
    auto dtype = read_le<std::uint8_t>(is, off);
    if (dtype > 1) throw ParseError("unknown dtype code " + std::to_string(dtype), 6);
    auto ndim = read_le<std::uint8_t>(is, off);
    std::vector<std::size_t> dims(ndim);
    for (auto& d : dims) {
        d = static_cast<std::size_t>(read_le<std::uint64_t>(is, off));
        if (d == 0) throw ParseError("zero dimension in tensor header", off - 8);
    }
    Tensor t(dims);
    for (double& v : t.data) {
        v = (dtype == 0) ? read_le<double>(is, off)
                         : static_cast<double>(read_le<float>(is, off));
    }
    return t;
}

}  // namespace dlaseg
