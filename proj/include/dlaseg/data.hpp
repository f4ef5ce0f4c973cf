#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>

#include "dlaseg/tensor.hpp"

namespace dlaseg {

// Boundary classes
inline constexpr std::uint8_t kBgClass = 0;
inline constexpr std::uint8_t kWallClass = 1;
inline constexpr std::uint8_t kDoorWindowClass = 2;
inline constexpr std::size_t kBoundaryClasses = 3;

// Room classes: 0 = background, then the six room types
inline constexpr std::size_t kRoomClasses = 7;
extern const std::array<const char*, kBoundaryClasses> kBoundaryClassNames;
extern const std::array<const char*, kRoomClasses> kRoomClassNames;

/// 8-bit RGB used when rasterizing samples; image tensors hold value/255.
struct Rgb {
    std::uint8_t r, g, b;
};
Rgb boundary_color(std::uint8_t cls);
Rgb room_fill_color(std::uint8_t cls);

struct LabelMap {
    std::size_t h = 0, w = 0;
    std::vector<std::uint8_t> v;

    LabelMap() = default;
    LabelMap(std::size_t hh, std::size_t ww) : h(hh), w(ww), v(hh * ww, 0) {}
    std::uint8_t& at(std::size_t y, std::size_t x) { return v[y * w + x]; }
    std::uint8_t at(std::size_t y, std::size_t x) const { return v[y * w + x]; }
    bool operator==(const LabelMap&) const = default;
};

enum class RoomShape { rectangle, circle, inclined_quad };

struct FloorPlanSpec {
    std::size_t height = 64, width = 64;   // multiples of 16
    std::size_t min_rooms = 2, max_rooms = 4;
    std::vector<RoomShape> shapes{RoomShape::rectangle, RoomShape::circle,
                                  RoomShape::inclined_quad};
    std::size_t wall_thickness = 2;
    std::size_t min_door_len = 4, max_door_len = 8;
    std::uint64_t seed = 0;

    void validate() const;
};

struct FloorPlanSample {
    Tensor image;        // [3, H, W], values on the /255 grid
    LabelMap boundary;   // classes < kBoundaryClasses
    LabelMap room;       // classes < kRoomClasses

    bool operator==(const FloorPlanSample&) const = default;
};

class GenerationError : public std::runtime_error {
public:
    explicit GenerationError(const std::string& m) : std::runtime_error(m) {}
};

/// Deterministic for (spec, sample_index): the RNG stream is derived as
/// hash(spec.seed, sample_index).
FloorPlanSample generate_floorplan(const FloorPlanSpec& spec, std::uint64_t sample_index);

/// Rebuilds the rendered image from the two label maps (the rasterization
/// used by the generator; exposed for consistency checks and rendering).
Tensor rasterize(const LabelMap& boundary, const LabelMap& room);

// --- portable image / label I/O ---

void write_ppm(const std::filesystem::path& path, const Tensor& image);
Tensor read_ppm(const std::filesystem::path& path);
void write_pgm(const std::filesystem::path& path, const LabelMap& labels);
LabelMap read_pgm(const std::filesystem::path& path, std::size_t class_count);

void save_sample(const FloorPlanSample& s, const std::filesystem::path& dir,
                 std::size_t index);
FloorPlanSample load_sample(const std::filesystem::path& dir, std::size_t index);

struct DatasetManifest {
    FloorPlanSpec spec;
    std::size_t count = 0;
};

/// Generates `count` samples under `dir` with the NNNNN.{ppm,pgm} layout
/// plus manifest.json.
void generate_dataset(const FloorPlanSpec& spec, std::size_t count,
                      const std::filesystem::path& dir);
DatasetManifest load_manifest(const std::filesystem::path& dir);
std::vector<FloorPlanSample> load_dataset(const std::filesystem::path& dir);

Tensor one_hot(const LabelMap& labels, std::size_t class_count);
LabelMap argmax_channels(const Tensor& probs, std::size_t n);

}  // namespace dlaseg
