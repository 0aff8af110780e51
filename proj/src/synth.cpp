#include "tride/synth.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <sstream>

#include "tride/checkpoint.hpp"

namespace tride {

namespace {

constexpr double kCamHeight = 1.5;  // metres above the ground plane

// substream ids for generate_scene
constexpr std::uint64_t kLayoutStream = 1;
constexpr std::uint64_t kWeatherStream = 2;
constexpr std::uint64_t kRadarStream = 3;
constexpr std::uint64_t kCorruptStream = 4;
constexpr std::uint64_t kTextStream = 5;
constexpr std::uint64_t kSparseStream = 6;

struct ClassTraits {
  double width_m, height_m;    // physical card size
  float albedo[3];             // base colour
  double v_span;               // |radial velocity| bound (m/s)
  double rcs_base;             // nominal radar cross-section (dBsm)
};

const ClassTraits& traits(ObjectType t) {
  static const ClassTraits table[5] = {
      {4.0, 1.6, {0.70f, 0.12f, 0.12f}, 15.0, 10.0},   // car
      {7.0, 3.0, {0.85f, 0.85f, 0.90f}, 10.0, 25.0},   // truck
      {11.0, 3.2, {0.95f, 0.75f, 0.10f}, 10.0, 30.0},  // bus
      {0.6, 1.7, {0.20f, 0.35f, 0.70f}, 2.0, -5.0},    // person
      {0.8, 1.2, {0.10f, 0.80f, 0.30f}, 0.0, 15.0},    // sign
  };
  return table[static_cast<int>(t)];
}

constexpr float kGroundAlbedo[3] = {0.35f, 0.33f, 0.30f};
constexpr float kSkyAlbedo[3] = {0.55f, 0.70f, 0.90f};

float shading(float depth, float cap) {
  return 1.f - 0.65f * std::min(depth, cap) / cap;
}

float ramp_depth(int row, const Intrinsics& k, float cap) {
  const double dr = row + 0.5 - k.cy;
  if (dr <= 0.0) return cap;  // sky / far background
  return static_cast<float>(std::min(static_cast<double>(cap), k.fy * kCamHeight / dr));
}

}  // namespace

void validate_gen_params(const GenParams& p) {
  if (p.h <= 0 || p.w <= 0 || p.h % 32 != 0 || p.w % 32 != 0) {
    throw ContractError("scene size must be positive and divisible by 32, got " +
                        std::to_string(p.h) + "x" + std::to_string(p.w));
  }
  if (p.radar_points < 0) throw ContractError("radar_points must be non-negative");
  if (p.sigma_r < 0.f) throw ContractError("sigma_r must be non-negative");
  if (p.clutter_fraction < 0.f || p.clutter_fraction > 1.f) {
    throw ContractError("clutter_fraction must lie in [0,1]");
  }
  if (p.text_noise < 0.f || p.text_noise > 1.f) {
    throw ContractError("text_noise must lie in [0,1]");
  }
  if (p.depth_cap <= 0.f) throw ContractError("depth_cap must be positive");
}

const char* object_name(ObjectType t) {
  switch (t) {
    case ObjectType::kCar: return "car";
    case ObjectType::kTruck: return "truck";
    case ObjectType::kBus: return "bus";
    case ObjectType::kPerson: return "person";
    case ObjectType::kSign: return "sign";
  }
  return "?";
}

Intrinsics default_intrinsics(int h, int w) {
  Intrinsics k;
  k.fx = w / 2.0;
  k.fy = w / 2.0;
  k.cx = w / 2.0;
  k.cy = h / 2.0;
  return k;
}

SceneLayout generate_layout(Rng& rng, const GenParams& p) {
  const Intrinsics k = default_intrinsics(p.h, p.w);
  SceneLayout layout;
  const int n = 1 + static_cast<int>(rng.uniform_int(8));
  for (int i = 0; i < n; ++i) {
    SceneObject o;
    o.type = static_cast<ObjectType>(rng.uniform_int(5));
    o.depth = static_cast<float>(rng.uniform(4.0, 75.0));
    const ClassTraits& tr = traits(o.type);
    const int pw = std::clamp(static_cast<int>(std::lround(k.fx * tr.width_m / o.depth)), 2,
                              p.w / 2);
    const int ph = std::clamp(static_cast<int>(std::lround(k.fy * tr.height_m / o.depth)), 2,
                              p.h / 2);
    // objects stand on the ground ramp at their depth
    int bottom = static_cast<int>(std::lround(k.cy + k.fy * kCamHeight / o.depth));
    bottom = std::clamp(bottom, ph, p.h);
    o.y0 = bottom - ph;
    o.y1 = bottom;
    o.x0 = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(p.w - pw + 1)));
    o.x1 = o.x0 + pw;
    layout.objects.push_back(o);
  }
  std::sort(layout.objects.begin(), layout.objects.end(),
            [](const SceneObject& a, const SceneObject& b) { return a.depth > b.depth; });
  return layout;
}

Tensor<float> render_depth(const SceneLayout& layout, const GenParams& p) {
  const Intrinsics k = default_intrinsics(p.h, p.w);
  Tensor<float> d({p.h, p.w});
  for (int r = 0; r < p.h; ++r) {
    const float z = ramp_depth(r, k, p.depth_cap);
    for (int c = 0; c < p.w; ++c) d.at2(r, c) = z;
  }
  for (const SceneObject& o : layout.objects) {  // far to near: nearer drawn last
    for (int r = o.y0; r < o.y1; ++r) {
      for (int c = o.x0; c < o.x1; ++c) d.at2(r, c) = o.depth;
    }
  }
  return d;
}

Tensor<float> render_clean_image(const SceneLayout& layout, const Tensor<float>& depth,
                                 const GenParams& p) {
  if (depth.shape != Shape{p.h, p.w}) {
    throw DimError("depth map does not match scene size: " + shape_str(depth.shape));
  }
  const Intrinsics k = default_intrinsics(p.h, p.w);
  std::vector<int> owner(static_cast<std::size_t>(p.h) * p.w, -1);
  for (std::size_t i = 0; i < layout.objects.size(); ++i) {
    const SceneObject& o = layout.objects[i];
    for (int r = o.y0; r < o.y1; ++r) {
      for (int c = o.x0; c < o.x1; ++c) {
        owner[static_cast<std::size_t>(r) * p.w + c] = static_cast<int>(i);
      }
    }
  }
  Tensor<float> img({3, p.h, p.w});
  for (int r = 0; r < p.h; ++r) {
    const bool sky_row = (r + 0.5 - k.cy) <= 0.0;
    for (int c = 0; c < p.w; ++c) {
      const int own = owner[static_cast<std::size_t>(r) * p.w + c];
      const float* albedo;
      float bright;
      if (own >= 0) {
        albedo = traits(layout.objects[own].type).albedo;
        bright = shading(depth.at2(r, c), p.depth_cap);
      } else if (sky_row) {
        albedo = kSkyAlbedo;
        bright = 1.f;
      } else {
        albedo = kGroundAlbedo;
        bright = shading(depth.at2(r, c), p.depth_cap);
      }
      for (int ch = 0; ch < 3; ++ch) img.at3(ch, r, c) = albedo[ch] * bright;
    }
  }
  return img;
}

Tensor<float> corrupt_weather(const Tensor<float>& image, Weather weather, std::uint64_t seed) {
  if (image.rank() != 3 || image.shape[0] != 3) {
    throw DimError("corrupt_weather expects a [3 x H x W] image, got " + shape_str(image.shape));
  }
  if (weather == Weather::kNormal) return image;
  const int h = image.shape[1], w = image.shape[2];
  Rng rng(seed);
  Tensor<float> out(image.shape);
  if (weather == Weather::kRainy) {
    // 3x3 box blur with edge renormalization
    for (int ch = 0; ch < 3; ++ch) {
      for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
          float sum = 0.f;
          int cnt = 0;
          for (int dr = -1; dr <= 1; ++dr) {
            for (int dc = -1; dc <= 1; ++dc) {
              const int rr = r + dr, cc = c + dc;
              if (rr < 0 || rr >= h || cc < 0 || cc >= w) continue;
              sum += image.at3(ch, rr, cc);
              ++cnt;
            }
          }
          out.at3(ch, r, c) = sum / static_cast<float>(cnt);
        }
      }
    }
    // vertical streaks: one additive offset per column
    std::vector<float> streak(static_cast<std::size_t>(w));
    for (int c = 0; c < w; ++c) streak[c] = static_cast<float>(rng.normal(0.0, 0.08));
    for (int ch = 0; ch < 3; ++ch) {
      for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
          out.at3(ch, r, c) = std::clamp(out.at3(ch, r, c) + streak[c], 0.f, 1.f);
        }
      }
    }
    return out;
  }
  // night: dim plus sensor noise
  for (std::size_t i = 0; i < image.numel(); ++i) {
    const float v = 0.25f * image.data[i] + static_cast<float>(rng.normal(0.0, 0.05));
    out.data[i] = std::clamp(v, 0.f, 1.f);
  }
  return out;
}

RadarPointCloud sample_radar(const Tensor<float>& dense, const SceneLayout& layout,
                             const GenParams& p, std::uint64_t seed, const Intrinsics& k) {
  if (dense.shape != Shape{p.h, p.w}) {
    throw DimError("sample_radar depth map does not match scene size");
  }
  Rng rng(seed);
  const int n_clutter =
      static_cast<int>(std::lround(static_cast<double>(p.clutter_fraction) * p.radar_points));
  const int ground_top = static_cast<int>(k.cy);
  RadarPointCloud cloud;
  cloud.reserve(static_cast<std::size_t>(p.radar_points));
  for (int i = 0; i < p.radar_points; ++i) {
    int u, v;
    int cls = -1;  // ground
    if (!layout.objects.empty() && rng.uniform() < 0.7) {
      const SceneObject& o = layout.objects[rng.uniform_int(layout.objects.size())];
      u = o.x0 + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(o.x1 - o.x0)));
      v = o.y0 + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(o.y1 - o.y0)));
      cls = static_cast<int>(o.type);
    } else {
      v = ground_top + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(p.h - ground_top)));
      u = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(p.w)));
    }
    double z = dense.at2(v, u);
    if (p.sigma_r > 0.f) z += rng.normal(0.0, p.sigma_r);
    if (i < n_clutter) z = rng.uniform(1.0, p.depth_cap);
    z = std::max(z, 0.3);
    RadarPoint pt;
    pt.z = static_cast<float>(z);
    pt.x = static_cast<float>((u - k.cx) * z / k.fx);
    pt.y = static_cast<float>((v - k.cy) * z / k.fy);
    if (cls >= 0) {
      const ClassTraits& tr = traits(static_cast<ObjectType>(cls));
      pt.v_r = static_cast<float>(rng.uniform(-tr.v_span, tr.v_span));
      pt.rcs = static_cast<float>(std::clamp(tr.rcs_base + rng.uniform(-5.0, 5.0), -10.0, 40.0));
    } else {
      pt.v_r = 0.f;
      pt.rcs = static_cast<float>(std::clamp(rng.uniform(-5.0, 5.0), -10.0, 40.0));
    }
    cloud.push_back(pt);
  }
  return cloud;
}

std::string render_text(const SceneLayout& layout, Weather weather, const GenParams& p,
                        std::uint64_t seed) {
  Rng rng(seed);
  const char* wea_word = "sunny";
  if (weather == Weather::kRainy) wea_word = "rainy";
  if (weather == Weather::kNight) wea_word = "night-time";

  std::array<std::vector<std::string>, 4> bands;
  for (const SceneObject& o : layout.objects) {
    const int center = std::clamp((o.x0 + o.x1) / 2, 0, p.w - 1);
    const Region reg = region_of_column(center, p.w);
    const double noisy =
        o.depth * (1.0 + rng.uniform(-static_cast<double>(p.text_noise), p.text_noise));
    long rounded = std::lround(noisy / 5.0) * 5;
    if (rounded < 5) rounded = 5;
    bands[static_cast<int>(reg)].push_back(std::string("A ") + object_name(o.type) +
                                           " is about " + std::to_string(rounded) +
                                           " meters away.");
  }

  std::string out;
  out += std::string("- The image depicts a street scene in ") + wea_word +
         " conditions. The road stretches ahead toward the horizon.\n";
  for (int b = 0; b < 4; ++b) {
    out += "- ";
    if (bands[b].empty()) {
      out += "There are no notable objects here.";
    } else {
      for (std::size_t i = 0; i < bands[b].size(); ++i) {
        if (i) out += " ";
        out += bands[b][i];
      }
    }
    out += "\n";
  }
  return out;
}

SceneSample generate_scene(std::uint64_t seed, const GenParams& p, Weather forced) {
  validate_gen_params(p);
  Rng layout_rng = Rng(seed).split(kLayoutStream);
  const SceneLayout layout = generate_layout(layout_rng, p);

  SceneSample s;
  s.weather = forced;
  s.dense = render_depth(layout, p);
  const Tensor<float> clean = render_clean_image(layout, s.dense, p);
  s.image = corrupt_weather(clean, s.weather, Rng::derive(seed, kCorruptStream));
  s.cloud = sample_radar(s.dense, layout, p, Rng::derive(seed, kRadarStream),
                         default_intrinsics(p.h, p.w));
  s.sparse = Tensor<float>({p.h, p.w});
  Rng sparse_rng = Rng(seed).split(kSparseStream);
  for (int r = 0; r < p.h; r += 4) {
    for (int c = 0; c < p.w; ++c) {
      if (sparse_rng.uniform() < 0.3) s.sparse.at2(r, c) = s.dense.at2(r, c);
    }
  }
  s.text = render_text(layout, s.weather, p, Rng::derive(seed, kTextStream));
  return s;
}

SceneSample generate_scene(std::uint64_t seed, const GenParams& p) {
  const Weather w =
      static_cast<Weather>(Rng(seed).split(kWeatherStream).uniform_int(3));
  return generate_scene(seed, p, w);
}

static constexpr char kSceneMagic[8] = {'T', 'R', 'I', 'D', 'E', 'S', 'C', 'N'};
static constexpr std::uint32_t kSceneVersion = 1;

void save_scene(const SceneSample& s, const std::string& path) {
  const int h = s.dense.shape.size() == 2 ? s.dense.shape[0] : -1;
  const int w = s.dense.shape.size() == 2 ? s.dense.shape[1] : -1;
  if (h <= 0 || w <= 0 || s.image.shape != Shape{3, h, w} || s.sparse.shape != Shape{h, w}) {
    throw ContractError("scene tensors are inconsistent; cannot save");
  }
  std::string bytes(kSceneMagic, 8);
  detail::put_u32_le(bytes, kSceneVersion);
  detail::put_u32_le(bytes, static_cast<std::uint32_t>(h));
  detail::put_u32_le(bytes, static_cast<std::uint32_t>(w));
  auto put_block = [&bytes](const std::vector<float>& v) {
    for (float f : v) detail::put_u32_le(bytes, std::bit_cast<std::uint32_t>(f));
  };
  put_block(s.image.data);
  put_block(s.dense.data);
  put_block(s.sparse.data);
  detail::put_u32_le(bytes, static_cast<std::uint32_t>(s.cloud.size()));
  for (const RadarPoint& pt : s.cloud) {
    for (float f : {pt.x, pt.y, pt.z, pt.v_r, pt.rcs}) {
      detail::put_u32_le(bytes, std::bit_cast<std::uint32_t>(f));
    }
  }
  bytes.push_back(static_cast<char>(static_cast<int>(s.weather)));
  detail::put_u32_le(bytes, static_cast<std::uint32_t>(s.text.size()));
  bytes += s.text;
  detail::write_file_bytes(path, bytes);
}

SceneSample load_scene(const std::string& path) {
  const std::string bytes = detail::read_file_bytes(path);
  const auto* raw = reinterpret_cast<const unsigned char*>(bytes.data());
  std::size_t off = 0;
  auto need = [&](std::size_t n, const char* what) {
    if (off + n > bytes.size()) {
      throw FormatError(std::string("scene file truncated reading ") + what, off);
    }
  };
  auto take_u32 = [&](const char* what) {
    need(4, what);
    const std::uint32_t v = detail::get_u32_le(raw + off);
    off += 4;
    return v;
  };
  need(8, "magic");
  if (bytes.compare(0, 8, kSceneMagic, 8) != 0) throw FormatError("bad scene magic", 0);
  off = 8;
  const std::uint32_t version = take_u32("version");
  if (version != kSceneVersion) {
    throw FormatError("unsupported scene version " + std::to_string(version), 8);
  }
  const std::uint32_t h = take_u32("height");
  const std::uint32_t w = take_u32("width");
  if (h == 0 || w == 0 || h > 1 << 14 || w > 1 << 14) {
    throw FormatError("implausible scene size " + std::to_string(h) + "x" + std::to_string(w),
                      12);
  }
  SceneSample s;
  auto take_block = [&](Shape shape, const char* what) {
    Tensor<float> t(std::move(shape));
    need(t.numel() * 4, what);
    for (std::size_t i = 0; i < t.numel(); ++i) {
      t.data[i] = std::bit_cast<float>(detail::get_u32_le(raw + off));
      off += 4;
    }
    return t;
  };
  const int hi = static_cast<int>(h), wi = static_cast<int>(w);
  s.image = take_block({3, hi, wi}, "image");
  s.dense = take_block({hi, wi}, "dense depth");
  s.sparse = take_block({hi, wi}, "sparse depth");
  const std::uint32_t n = take_u32("point count");
  if (n > 1u << 20) throw FormatError("implausible point count", off - 4);
  for (std::uint32_t i = 0; i < n; ++i) {
    need(20, "radar point");
    RadarPoint pt;
    float* fields[5] = {&pt.x, &pt.y, &pt.z, &pt.v_r, &pt.rcs};
    for (float* f : fields) {
      *f = std::bit_cast<float>(detail::get_u32_le(raw + off));
      off += 4;
    }
    s.cloud.push_back(pt);
  }
  need(1, "weather label");
  const int wea = static_cast<unsigned char>(bytes[off]);
  off += 1;
  if (wea > 2) throw FormatError("unknown weather label " + std::to_string(wea), off - 1);
  s.weather = static_cast<Weather>(wea);
  const std::uint32_t text_len = take_u32("text length");
  need(text_len, "text");
  s.text.assign(bytes, off, text_len);
  off += text_len;
  if (off != bytes.size()) throw FormatError("trailing bytes after scene payload", off);
  return s;
}

void save_manifest(const std::vector<ManifestEntry>& entries, const std::string& path) {
  std::string out;
  for (const ManifestEntry& e : entries) {
    if (e.path.empty() || e.split.empty() || e.path.find('\t') != std::string::npos ||
        e.path.find('\n') != std::string::npos || e.split.find('\n') != std::string::npos) {
      throw ContractError("manifest entries need tab-free path and split");
    }
    out += e.path;
    out += '\t';
    out += e.split;
    out += '\n';
  }
  detail::write_file_bytes(path, out);
}

std::vector<ManifestEntry> load_manifest(const std::string& path) {
  const std::string bytes = detail::read_file_bytes(path);
  std::vector<ManifestEntry> entries;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < bytes.size()) {
    ++line_no;
    std::size_t end = bytes.find('\n', pos);
    if (end == std::string::npos) end = bytes.size();
    const std::string line = bytes.substr(pos, end - pos);
    pos = end + 1;
    if (line.empty()) continue;
    const std::size_t tab = line.find('\t');
    if (tab == std::string::npos || tab == 0 || tab + 1 >= line.size()) {
      throw ParseError("manifest line " + std::to_string(line_no) +
                       ": expected '<path>\\t<split>'");
    }
    entries.push_back({line.substr(0, tab), line.substr(tab + 1)});
  }
  return entries;
}

}  // namespace tride
