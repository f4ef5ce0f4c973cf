#include "dlaseg/data.hpp"

#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>

namespace dlaseg {

using nlohmann::json;
namespace fs = std::filesystem;

const std::array<const char*, kBoundaryClasses> kBoundaryClassNames = {
    "background", "wall", "door/window"};
const std::array<const char*, kRoomClasses> kRoomClassNames = {
    "background", "closet", "bathroom", "living room", "bedroom", "hall", "balcony"};

Rgb boundary_color(std::uint8_t cls) {
    switch (cls) {
        case kWallClass: return {26, 26, 26};
        case kDoorWindowClass: return {140, 140, 140};
        default: return {255, 255, 255};
    }
}

Rgb room_fill_color(std::uint8_t cls) {
    static const std::array<Rgb, kRoomClasses> fills = {{
        {255, 255, 255},  // background
        {242, 204, 204},  // closet
        {204, 242, 204},  // bathroom
        {204, 204, 242},  // living room
        {242, 242, 178},  // bedroom
        {242, 204, 242},  // hall
        {178, 242, 242},  // balcony
    }};
    return fills.at(cls);
}

void FloorPlanSpec::validate() const {
    if (height % 16 != 0 || width % 16 != 0)
        throw ContractError("canvas dimensions must be multiples of 16");
    if (min_rooms == 0 || max_rooms < min_rooms)
        throw ContractError("invalid room count range");
    if (shapes.empty()) throw ContractError("at least one room shape required");
    if (wall_thickness == 0) throw ContractError("wall thickness must be positive");
    if (min_door_len == 0 || max_door_len < min_door_len)
        throw ContractError("invalid door length range");
}

Tensor rasterize(const LabelMap& boundary, const LabelMap& room) {
    const std::size_t H = boundary.h, W = boundary.w;
    Tensor img({3, H, W});
    for (std::size_t y = 0; y < H; ++y)
        for (std::size_t x = 0; x < W; ++x) {
            Rgb col = boundary.at(y, x) != kBgClass
                          ? boundary_color(boundary.at(y, x))
                          : room_fill_color(room.at(y, x));
            img.data[(0 * H + y) * W + x] = col.r / 255.0;
            img.data[(1 * H + y) * W + x] = col.g / 255.0;
            img.data[(2 * H + y) * W + x] = col.b / 255.0;
        }
    return img;
}

namespace {

std::size_t rand_range(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
    // inclusive bounds, deterministic across platforms
    return lo + static_cast<std::size_t>(rng() % (hi - lo + 1));
}

struct Mask {
    std::size_t h, w;
    std::vector<std::uint8_t> v;
    Mask(std::size_t hh, std::size_t ww) : h(hh), w(ww), v(hh * ww, 0) {}
    std::uint8_t& at(std::size_t y, std::size_t x) { return v[y * w + x]; }
    std::uint8_t at(std::size_t y, std::size_t x) const { return v[y * w + x]; }
};

/// wall ring = Chebyshev dilation of the interior minus the interior
Mask dilate_ring(const Mask& interior, std::size_t t) {
    Mask ring(interior.h, interior.w);
    const std::ptrdiff_t r = static_cast<std::ptrdiff_t>(t);
    for (std::ptrdiff_t y = 0; y < static_cast<std::ptrdiff_t>(interior.h); ++y)
        for (std::ptrdiff_t x = 0; x < static_cast<std::ptrdiff_t>(interior.w); ++x) {
            if (interior.at(y, x)) continue;
            bool near = false;
            for (std::ptrdiff_t dy = -r; dy <= r && !near; ++dy)
                for (std::ptrdiff_t dx = -r; dx <= r && !near; ++dx) {
                    std::ptrdiff_t yy = y + dy, xx = x + dx;
                    if (yy >= 0 && xx >= 0 && yy < static_cast<std::ptrdiff_t>(interior.h) &&
                        xx < static_cast<std::ptrdiff_t>(interior.w) && interior.at(yy, xx))
                        near = true;
                }
            if (near) ring.at(y, x) = 1;
        }
    return ring;
}

}  // namespace

FloorPlanSample generate_floorplan(const FloorPlanSpec& spec, std::uint64_t sample_index) {
    spec.validate();
    std::mt19937_64 rng(derive_stream(spec.seed, sample_index));
    const std::size_t H = spec.height, W = spec.width, t = spec.wall_thickness;
    const std::size_t margin = 2;

    LabelMap boundary(H, W), room(H, W);
    Mask occupied(H, W);
    const std::size_t n_rooms = rand_range(rng, spec.min_rooms, spec.max_rooms);
    std::size_t placed = 0;

    for (std::size_t r = 0; r < n_rooms; ++r) {
        bool done = false;
        for (std::size_t attempt = 0; attempt < 200 && !done; ++attempt) {
            RoomShape shape = spec.shapes[rand_range(rng, 0, spec.shapes.size() - 1)];
            Mask interior(H, W);
            const std::size_t cap = std::min(H, W) / 2;
            bool shaped = false;
            if (shape == RoomShape::rectangle || shape == RoomShape::inclined_quad) {
                std::size_t ih = rand_range(rng, 8, std::max<std::size_t>(9, cap - 4));
                std::size_t iw = rand_range(rng, 8, std::max<std::size_t>(9, cap - 4));
                if (margin + t + ih + t + margin > H || margin + t + iw + t + margin > W)
                    continue;
                std::size_t y0 = rand_range(rng, margin + t, H - margin - t - ih);
                std::size_t x0 = rand_range(rng, margin + t, W - margin - t - iw);
                double a = 0, b = 0;
                std::size_t corner = 0;
                if (shape == RoomShape::inclined_quad) {
                    // cut one corner with a line of slope between 15 and 75 degrees
                    double theta = draw_uniform(rng, 15.0, 75.0) * M_PI / 180.0;
                    a = static_cast<double>(iw) * draw_uniform(rng, 0.35, 0.6);
                    b = a * std::tan(theta);
                    b = std::min(b, static_cast<double>(ih) * 0.6);
                    corner = rand_range(rng, 0, 3);
                }
                for (std::size_t y = 0; y < ih; ++y)
                    for (std::size_t x = 0; x < iw; ++x) {
                        if (shape == RoomShape::inclined_quad) {
                            double cx = (corner == 1 || corner == 3)
                                            ? static_cast<double>(iw - 1 - x)
                                            : static_cast<double>(x);
                            double cy = (corner >= 2) ? static_cast<double>(ih - 1 - y)
                                                      : static_cast<double>(y);
                            if (cx / a + cy / b < 1.0) continue;
                        }
                        interior.at(y0 + y, x0 + x) = 1;
                    }
                shaped = true;
            } else {  // circle
                std::size_t rmax = std::min(H, W) / 4;
                if (rmax < 8) continue;
                std::size_t rad = rand_range(rng, 8, rmax);
                if (margin + t + 2 * rad + t + margin > std::min(H, W)) continue;
                std::size_t cy = rand_range(rng, margin + t + rad, H - margin - t - rad - 1);
                std::size_t cx = rand_range(rng, margin + t + rad, W - margin - t - rad - 1);
                for (std::size_t y = cy - rad; y <= cy + rad; ++y)
                    for (std::size_t x = cx - rad; x <= cx + rad; ++x) {
                        double dy = static_cast<double>(y) - static_cast<double>(cy);
                        double dx = static_cast<double>(x) - static_cast<double>(cx);
                        if (dy * dy + dx * dx <= static_cast<double>(rad * rad))
                            interior.at(y, x) = 1;
                    }
                shaped = true;
            }
            if (!shaped) continue;

            Mask ring = dilate_ring(interior, t);
            // footprint must stay inside the margin and off other rooms
            bool ok = true;
            for (std::size_t y = 0; y < H && ok; ++y)
                for (std::size_t x = 0; x < W && ok; ++x) {
                    if (!interior.at(y, x) && !ring.at(y, x)) continue;
                    if (y < margin || x < margin || y >= H - margin || x >= W - margin ||
                        occupied.at(y, x))
                        ok = false;
                }
            if (!ok) continue;

            const std::uint8_t cls = static_cast<std::uint8_t>(rand_range(rng, 1, 6));
            std::vector<std::size_t> ring_pixels;
            for (std::size_t y = 0; y < H; ++y)
                for (std::size_t x = 0; x < W; ++x) {
                    if (interior.at(y, x)) {
                        occupied.at(y, x) = 1;
                        room.at(y, x) = cls;
                    } else if (ring.at(y, x)) {
                        occupied.at(y, x) = 1;
                        boundary.at(y, x) = kWallClass;
                        ring_pixels.push_back(y * W + x);
                    }
                }

            // one or two door/window openings along the wall
            const std::size_t n_doors = rand_range(rng, 1, 2);
            for (std::size_t d = 0; d < n_doors; ++d) {
                std::size_t pick = ring_pixels[rand_range(rng, 0, ring_pixels.size() - 1)];
                std::ptrdiff_t py = static_cast<std::ptrdiff_t>(pick / W);
                std::ptrdiff_t px = static_cast<std::ptrdiff_t>(pick % W);
                std::ptrdiff_t half = static_cast<std::ptrdiff_t>(
                    rand_range(rng, spec.min_door_len, spec.max_door_len) / 2);
                for (std::size_t idx : ring_pixels) {
                    std::ptrdiff_t y = static_cast<std::ptrdiff_t>(idx / W);
                    std::ptrdiff_t x = static_cast<std::ptrdiff_t>(idx % W);
                    if (std::abs(y - py) <= half && std::abs(x - px) <= half)
                        boundary.v[idx] = kDoorWindowClass;
                }
            }
            done = true;
            ++placed;
        }
        if (!done && placed < spec.min_rooms)
            throw GenerationError("could not place room " + std::to_string(r + 1) +
                                  " within the canvas after bounded retries");
    }

    FloorPlanSample s;
    s.boundary = std::move(boundary);
    s.room = std::move(room);
    s.image = rasterize(s.boundary, s.room);
    return s;
}

// ------------------------------------------------------------------- file I/O

namespace {

void atomic_write(const fs::path& path, const std::string& bytes) {
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
        os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!os) throw std::runtime_error("write failed for " + tmp.string());
    }
    fs::rename(tmp, path);
}

std::string read_file(const fs::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open " + path.string());
    return std::string(std::istreambuf_iterator<char>(is), {});
}

struct PnmHeader {
    std::size_t w, h, offset;
};

PnmHeader parse_pnm_header(const std::string& bytes, const char* magic) {
    std::size_t pos = 0;
    auto fail = [&](const std::string& m) -> ParseError { return ParseError(m, pos); };
    if (bytes.size() < 2 || bytes[0] != magic[0] || bytes[1] != magic[1])
        throw fail(std::string("expected ") + magic + " magic");
    pos = 2;
    auto next_token = [&]() -> std::string {
        while (pos < bytes.size() && std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
        std::size_t start = pos;
        while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
        if (start == pos) throw fail("truncated header");
        return bytes.substr(start, pos - start);
    };
    std::size_t w = std::stoul(next_token());
    std::size_t h = std::stoul(next_token());
    std::size_t maxval = std::stoul(next_token());
    if (maxval != 255) throw fail("only maxval 255 is supported");
    if (pos >= bytes.size()) throw fail("missing pixel data");
    ++pos;  // single whitespace after maxval
    return {w, h, pos};
}

}  // namespace

void write_ppm(const fs::path& path, const Tensor& image) {
    if (image.ndim() != 3 || image.dims[0] != 3)
        throw ShapeError("write_ppm expects a [3,H,W] tensor, got " + image.shape_str());
    const std::size_t H = image.dims[1], W = image.dims[2];
    std::string bytes = "P6\n" + std::to_string(W) + " " + std::to_string(H) + "\n255\n";
    bytes.reserve(bytes.size() + 3 * H * W);
    for (std::size_t y = 0; y < H; ++y)
        for (std::size_t x = 0; x < W; ++x)
            for (std::size_t ch = 0; ch < 3; ++ch) {
                double v = image.data[(ch * H + y) * W + x];
                bytes.push_back(static_cast<char>(
                    static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0))));
            }
    atomic_write(path, bytes);
}

Tensor read_ppm(const fs::path& path) {
    const std::string bytes = read_file(path);
    PnmHeader hd = parse_pnm_header(bytes, "P6");
    if (bytes.size() < hd.offset + 3 * hd.w * hd.h)
        throw ParseError("truncated PPM pixel data", bytes.size());
    Tensor img({3, hd.h, hd.w});
    std::size_t pos = hd.offset;
    for (std::size_t y = 0; y < hd.h; ++y)
        for (std::size_t x = 0; x < hd.w; ++x)
            for (std::size_t ch = 0; ch < 3; ++ch)
                img.data[(ch * hd.h + y) * hd.w + x] =
                    static_cast<std::uint8_t>(bytes[pos++]) / 255.0;
    return img;
}

void write_pgm(const fs::path& path, const LabelMap& labels) {
    std::string bytes =
        "P5\n" + std::to_string(labels.w) + " " + std::to_string(labels.h) + "\n255\n";
    bytes.append(reinterpret_cast<const char*>(labels.v.data()), labels.v.size());
    atomic_write(path, bytes);
}

LabelMap read_pgm(const fs::path& path, std::size_t class_count) {
    const std::string bytes = read_file(path);
    PnmHeader hd = parse_pnm_header(bytes, "P5");
    if (bytes.size() < hd.offset + hd.w * hd.h)
        throw ParseError("truncated PGM pixel data", bytes.size());
    LabelMap m(hd.h, hd.w);
    for (std::size_t i = 0; i < hd.w * hd.h; ++i) {
        std::uint8_t v = static_cast<std::uint8_t>(bytes[hd.offset + i]);
        if (v >= class_count)
            throw ParseError("class index " + std::to_string(v) + " >= class count " +
                                 std::to_string(class_count),
                             hd.offset + i);
        m.v[i] = v;
    }
    return m;
}

namespace {
std::string sample_stem(std::size_t index) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%05zu", index);
    return buf;
}
}  // namespace

void save_sample(const FloorPlanSample& s, const fs::path& dir, std::size_t index) {
    const std::string stem = sample_stem(index);
    write_ppm(dir / (stem + ".ppm"), s.image);
    write_pgm(dir / (stem + ".boundary.pgm"), s.boundary);
    write_pgm(dir / (stem + ".room.pgm"), s.room);
}

FloorPlanSample load_sample(const fs::path& dir, std::size_t index) {
    const std::string stem = sample_stem(index);
    FloorPlanSample s;
    s.image = read_ppm(dir / (stem + ".ppm"));
    s.boundary = read_pgm(dir / (stem + ".boundary.pgm"), kBoundaryClasses);
    s.room = read_pgm(dir / (stem + ".room.pgm"), kRoomClasses);
    return s;
}

namespace {

json spec_to_json(const FloorPlanSpec& spec) {
    json shapes = json::array();
    for (RoomShape sh : spec.shapes)
        shapes.push_back(sh == RoomShape::rectangle ? "rectangle"
                         : sh == RoomShape::circle  ? "circle"
                                                    : "inclined_quad");
    return json{{"height", spec.height},
                {"width", spec.width},
                {"min_rooms", spec.min_rooms},
                {"max_rooms", spec.max_rooms},
                {"shapes", shapes},
                {"wall_thickness", spec.wall_thickness},
                {"min_door_len", spec.min_door_len},
                {"max_door_len", spec.max_door_len},
                {"seed", spec.seed}};
}

FloorPlanSpec spec_from_json(const json& j) {
    FloorPlanSpec spec;
    spec.height = j.at("height").get<std::size_t>();
    spec.width = j.at("width").get<std::size_t>();
    spec.min_rooms = j.at("min_rooms").get<std::size_t>();
    spec.max_rooms = j.at("max_rooms").get<std::size_t>();
    spec.shapes.clear();
    for (const auto& sh : j.at("shapes")) {
        const std::string s = sh.get<std::string>();
        if (s == "rectangle") spec.shapes.push_back(RoomShape::rectangle);
        else if (s == "circle") spec.shapes.push_back(RoomShape::circle);
        else if (s == "inclined_quad") spec.shapes.push_back(RoomShape::inclined_quad);
        else throw ContractError("unknown room shape \"" + s + "\"");
    }
    spec.wall_thickness = j.at("wall_thickness").get<std::size_t>();
    spec.min_door_len = j.at("min_door_len").get<std::size_t>();
    spec.max_door_len = j.at("max_door_len").get<std::size_t>();
    spec.seed = j.at("seed").get<std::uint64_t>();
    return spec;
}

}  // namespace

void generate_dataset(const FloorPlanSpec& spec, std::size_t count, const fs::path& dir) {
    spec.validate();
    fs::create_directories(dir);
    for (std::size_t i = 0; i < count; ++i)
        save_sample(generate_floorplan(spec, i), dir, i);
    json m;
    m["spec"] = spec_to_json(spec);
    m["count"] = count;
    m["boundary_classes"] = kBoundaryClassNames;
    m["room_classes"] = kRoomClassNames;
    atomic_write(dir / "manifest.json", m.dump(2) + "\n");
}

DatasetManifest load_manifest(const fs::path& dir) {
    json m = json::parse(read_file(dir / "manifest.json"));
    return {spec_from_json(m.at("spec")), m.at("count").get<std::size_t>()};
}

std::vector<FloorPlanSample> load_dataset(const fs::path& dir) {
    DatasetManifest m = load_manifest(dir);
    std::vector<FloorPlanSample> out;
    out.reserve(m.count);
    for (std::size_t i = 0; i < m.count; ++i) out.push_back(load_sample(dir, i));
    return out;
}

Tensor one_hot(const LabelMap& labels, std::size_t class_count) {
    Tensor t({class_count, labels.h, labels.w});
    for (std::size_t i = 0; i < labels.v.size(); ++i) {
        if (labels.v[i] >= class_count)
            throw ContractError("label " + std::to_string(labels.v[i]) +
                                " out of range for " + std::to_string(class_count) +
                                " classes");
        t.data[labels.v[i] * labels.v.size() + i] = 1.0;
    }
    return t;
}

LabelMap argmax_channels(const Tensor& probs, std::size_t n) {
    // accepts NCHW or a single CHW map (n must then be 0)
    const bool chw = probs.ndim() == 3;
    if (!chw && probs.ndim() != 4)
        throw ShapeError("argmax_channels expects CHW or NCHW, got " + probs.shape_str());
    if (chw && n != 0)
        throw ShapeError("argmax_channels: sample index on a 3-d tensor");
    const std::size_t C = chw ? probs.dims[0] : probs.c();
    const std::size_t H = chw ? probs.dims[1] : probs.h();
    const std::size_t W = chw ? probs.dims[2] : probs.w();
    const std::size_t HW = H * W;
    LabelMap m(H, W);
    for (std::size_t i = 0; i < HW; ++i) {
        std::size_t best = 0;
        double bv = probs.data[(n * C) * HW + i];
        for (std::size_t c = 1; c < C; ++c) {
            double v = probs.data[(n * C + c) * HW + i];
            if (v > bv) {  // ties resolve to the lowest class index
                bv = v;
                best = c;
            }
        }
        m.v[i] = static_cast<std::uint8_t>(best);
    }
    return m;
}

}  // namespace dlaseg
