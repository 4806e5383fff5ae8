#include "sdfas/datasyn.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <istream>
#include <numbers>
#include <ostream>
#include <random>

#include "sdfas/errors.hpp"

namespace sdfas {

void SynthConfig::validate() const {
  if (subjects_per_ethnicity < 5 || subjects_per_ethnicity > 500)
    throw UsageError("subjects per ethnicity must lie in [5, 500]");
  if (clip_length < 7) throw UsageError("clip length must be at least 7, the default rank-pool window");
  if (frame_size < 8) throw UsageError("frame size must be at least 8");
  if (flicker_period < 2) throw UsageError("flicker period must be at least 2");
  if (motion_amplitude < 0.0 || flicker_depth < 0.0 || flicker_depth >= 1.0)
    throw UsageError("motion amplitude must be >= 0 and flicker depth in [0, 1)");
  if (mask_subjects < 0 || silica_subjects < 0 || mask_samples < 1 || silica_samples < 1)
    throw UsageError("3D subset sizes must be non-negative with at least one sample");
}

SynthConfig SynthConfig::canonical() {
  SynthConfig c;
  c.subjects_per_ethnicity = 500;
  c.mask_subjects = 99;
  c.silica_subjects = 8;
  return c;
}

std::vector<int> subject_ids(int n) {
  const int train = static_cast<int>(std::lround(n * 0.4));
  const int valid = static_cast<int>(std::lround(n * 0.2));
  const int test = n - train - valid;
  std::vector<int> ids;
  for (int i = 0; i < train; ++i) ids.push_back(1 + i);
  for (int i = 0; i < valid; ++i) ids.push_back(201 + i);
  for (int i = 0; i < test; ++i) ids.push_back(301 + i);
  return ids;
}

namespace {

std::string video_name(const ManifestEntry& e) {
  char buf[96];
  const char eth = e.ethnicity == Ethnicity::kNone ? 'N' : ethnicity_tag(e.ethnicity);
  std::snprintf(buf, sizeof buf, "videos/%c_%04d_%s_%02d_%c.sdfv", eth, e.subject_id,
                std::string(attack_name(e.attack)).c_str(), e.sample, modality_tag(e.modality));
  return buf;
}

void add_presentation(Manifest& m, Ethnicity eth, int subject, AttackType attack, int sample) {
  for (auto mod : kAllModalities) {
    ManifestEntry e{subject, eth, mod, attack, sample, {}};
    e.video_path = video_name(e);
    m.push_back(std::move(e));
  }
}

// Independent stream per (seed, key...); generation order never matters.
std::mt19937_64 stream(std::uint64_t seed, std::initializer_list<std::uint64_t> keys) {
  std::vector<std::uint32_t> words{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
  for (auto k : keys) {
    words.push_back(static_cast<std::uint32_t>(k));
    words.push_back(static_cast<std::uint32_t>(k >> 32));
  }
  std::seed_seq s(words.begin(), words.end());
  return std::mt19937_64(s);
}

struct Subject {
  std::array<double, 3> skin{}, background{}, background_slope{};
  double cx = 0, cy = 0, rx = 0.5, ry = 0.65;
  double period_x = 10, period_y = 13, phase_x = 0, phase_y = 0;
  std::array<std::array<double, 4>, 4> waves{};  // texture sinusoids: fx, fy, phase, amplitude
  std::uint64_t key = 0;
};

Subject make_subject(const SynthConfig& cfg, const ManifestEntry& e) {
  const std::uint64_t key = (static_cast<std::uint64_t>(e.ethnicity) << 40) ^
                            (static_cast<std::uint64_t>(e.subject_id) << 8) ^
                            (e.is_3d() ? static_cast<std::uint64_t>(e.attack) << 50 : 0);
  auto rng = stream(cfg.seed, {1, key});
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto jit = [&](double a) { return a * (2.0 * u(rng) - 1.0); };
  Subject s;
  s.key = key;
  static constexpr std::array<std::array<double, 3>, 4> tones{{
      {110, 75, 55}, {200, 160, 130}, {225, 190, 160}, {190, 170, 150}}};
  const auto& tone = tones[static_cast<std::size_t>(e.ethnicity)];
  for (int c = 0; c < 3; ++c) {
    s.skin[c] = tone[c] + jit(15);
    s.background[c] = 60 + 120 * u(rng);
    s.background_slope[c] = jit(30);
  }
  s.cx = jit(0.08);
  s.cy = jit(0.08);
  s.rx = 0.45 + 0.1 * u(rng);
  s.ry = 0.6 + 0.1 * u(rng);
  s.period_x = 9 + 5 * u(rng);
  s.period_y = 11 + 5 * u(rng);
  s.phase_x = 2 * std::numbers::pi * u(rng);
  s.phase_y = 2 * std::numbers::pi * u(rng);
  for (auto& w : s.waves) w = {1 + 4 * u(rng), 1 + 4 * u(rng), 2 * std::numbers::pi * u(rng), 4 + 6 * u(rng)};
  return s;
}

struct Pose {
  double dx = 0, dy = 0;
};

// Shaded face over a background: RGB radiance and a depth map.
struct Render {
  Tensor rgb, depth;
};

Render render_face(const Subject& s, int size, Pose pose, bool textured) {
  Render r{Tensor({3, static_cast<std::size_t>(size), static_cast<std::size_t>(size)}),
           Tensor({1, static_cast<std::size_t>(size), static_cast<std::size_t>(size)})};
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const double u = (2.0 * x + 1.0) / size - 1.0;
      const double v = (2.0 * y + 1.0) / size - 1.0;
      const double fu = (u - s.cx - pose.dx) / s.rx;
      const double fv = (v - s.cy - pose.dy) / s.ry;
      const double r2 = fu * fu + fv * fv;
      double depth = 40.0;
      std::array<double, 3> px{};
      for (int c = 0; c < 3; ++c) px[c] = s.background[c] + s.background_slope[c] * u;
      if (r2 < 1.0) {
        const double z = std::sqrt(1.0 - r2);
        depth = 40.0 + 160.0 * z;
        double tex = 0.0;
        if (textured)
          for (const auto& w : s.waves) tex += w[3] * std::sin(w[0] * fu * 3.0 + w[1] * fv * 3.0 + w[2]);
        const double shade = 0.7 + 0.3 * z;
        for (int c = 0; c < 3; ++c) px[c] = s.skin[c] * shade + tex;
        // eyes and mouth
        for (double ex : {-0.38, 0.38}) {
          const double du = fu - ex, dv = fv + 0.25;
          if (du * du + dv * dv < 0.02)
            for (auto& p : px) p *= 0.35;
        }
        if (std::abs(fv - 0.45) < 0.06 && std::abs(fu) < 0.3) {
          px[0] *= 0.8;
          px[1] *= 0.55;
          px[2] *= 0.55;
        }
      }
      for (int c = 0; c < 3; ++c) r.rgb.at(c, y, x) = px[c];
      r.depth.at(0, y, x) = depth;
    }
  return r;
}

double luminance(const Tensor& rgb, int y, int x) {
  return 0.299 * rgb.at(0, y, x) + 0.587 * rgb.at(1, y, x) + 0.114 * rgb.at(2, y, x);
}

Tensor quantize(Tensor t) {
  for (auto& v : t.data()) v = std::clamp(std::floor(v + 0.5), 0.0, 255.0);
  return t;
}

}  // namespace

Manifest synth_manifest(const SynthConfig& cfg) {
  cfg.validate();
  Manifest m;
  for (auto eth : kEthnicities)
    for (int id : subject_ids(cfg.subjects_per_ethnicity))
      for (auto a : kAttacks2d) add_presentation(m, eth, id, a, 1);
  for (int id = 1; id <= cfg.mask_subjects; ++id)
    for (int k = 1; k <= cfg.mask_samples; ++k) add_presentation(m, Ethnicity::kNone, id, AttackType::kMask3d, k);
  for (int id = 1; id <= cfg.silica_subjects; ++id)
    for (int k = 1; k <= cfg.silica_samples; ++k)
      add_presentation(m, Ethnicity::kNone, id, AttackType::kSilicaGel, k);
  return m;
}

FrameSequence render_clip(const SynthConfig& cfg, const ManifestEntry& e) {
  cfg.validate();
  const Subject s = make_subject(cfg, e);
  const int n = cfg.frame_size;
  const std::size_t sz = static_cast<std::size_t>(n);
  // Sensor noise differs per clip and frame; the printed and 3D-mask surfaces
  // carry none so that a still print is exactly static.
  auto noise_rng = stream(cfg.seed, {2, s.key, static_cast<std::uint64_t>(e.attack), static_cast<std::uint64_t>(e.sample),
                                     static_cast<std::uint64_t>(e.modality)});
  std::normal_distribution<double> noise(0.0, 2.0);
  auto ir_rng = stream(cfg.seed, {3, s.key});
  std::normal_distribution<double> ir_noise(0.0, 3.0);
  Tensor ir_pattern({1, sz, sz});
  for (auto& v : ir_pattern.data()) v = ir_noise(ir_rng);

  const bool print = e.attack == AttackType::kPrintIndoor || e.attack == AttackType::kPrintOutdoor;
  const bool replay = e.attack == AttackType::kReplay;
  const bool planar = (print || replay) && cfg.planar_attack_depth;
  const double amp = cfg.motion_amplitude;
  const int margin = std::max(1, n / 10);

  FrameSequence clip;
  clip.modality = e.modality;
  for (int t = 0; t < cfg.clip_length; ++t) {
    Pose pose;
    if (!print && !(replay && cfg.static_replay)) {
      pose.dx = amp * std::sin(2 * std::numbers::pi * t / s.period_x + s.phase_x);
      pose.dy = 0.6 * amp * std::sin(2 * std::numbers::pi * t / s.period_y + s.phase_y);
    }
    Render r = render_face(s, n, pose, !e.is_3d());
    const double flicker =
        replay ? 1.0 + cfg.flicker_depth * std::sin(2 * std::numbers::pi * t / cfg.flicker_period) : 1.0;
    const bool noisy = !print && !e.is_3d();

    Tensor out({modality_channels(e.modality), sz, sz});
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) {
        const double u = (2.0 * x + 1.0) / n - 1.0;
        switch (e.modality) {
          case Modality::kColor: {
            for (int c = 0; c < 3; ++c) {
              double v = r.rgb.at(c, y, x);
              if (print) {
                // cloth print: halftone grid of 2 x 2 dots, coarse enough to
                // survive downscaling
                // gamut is washed toward the subject's mean tone so that
                // brightness alone carries no cue across skin tones
                v = 0.7 * v + 0.3 * 0.85 * s.skin[c] + ((x / 2 + y / 2) % 2 == 0 ? -14.0 : 14.0);
                // outdoor prints carry a warm daylight cast
                if (e.attack == AttackType::kPrintOutdoor) v += c == 0 ? 12.0 : c == 2 ? -12.0 : 0.0;
                // unprinted margin of the sheet
                if (std::min({x, y, n - 1 - x, n - 1 - y}) < margin) v = 235.0;
              } else if (replay) {
                // screen: two-pixel scanlines, blue cast and flicker
                v = v * flicker + (y % 4 < 2 ? -14.0 : 14.0);
                if (c == 2) v += 15.0;
              } else if (e.is_3d()) {
                v = 0.85 * v + (e.attack == AttackType::kSilicaGel ? 30.0 : 15.0);
              }
              out.at(c, y, x) = v + (noisy ? noise(noise_rng) : 0.0);
            }
            break;
          }
          case Modality::kDepth: {
            double d = planar ? 110.0 + 10.0 * u : r.depth.at(0, y, x);
            out.at(0, y, x) = d + (noisy && !planar ? noise(noise_rng) : 0.0);
            break;
          }
          case Modality::kIr: {
            double v = luminance(r.rgb, y, x);
            if (print) v = 0.55 * v + ((x + y) % 2 == 0 ? -8.0 : 8.0);
            else if (replay) v = 0.2 * v * flicker + 10.0;
            else if (e.is_3d()) v = 0.75 * v;
            else v = 0.9 * v + ir_pattern.at(0, y, x);
            out.at(0, y, x) = v + (noisy ? 0.5 * noise(noise_rng) : 0.0);
            break;
          }
        }
      }
    clip.frames.push_back(quantize(std::move(out)));
  }
  return clip;
}

Manifest synth_dataset(const SynthConfig& cfg, const std::filesystem::path& out_dir) {
  const Manifest m = synth_manifest(cfg);
  std::error_code ec;
  std::filesystem::create_directories(out_dir / "videos", ec);
  if (ec) throw DataError("cannot create " + (out_dir / "videos").string() + ": " + ec.message());
  for (const auto& e : m) save_video(out_dir / e.video_path, render_clip(cfg, e));
  save_manifest(out_dir / "manifest.csv", m);
  return m;
}

namespace {

constexpr char kVideoMagic[4] = {'S', 'D', 'F', 'V'};
constexpr std::uint16_t kVideoVersion = 1;

template <typename T>
void put(std::ostream& os, T v) {
  unsigned char b[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) b[i] = static_cast<unsigned char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), sizeof(T));
}

template <typename T>
T get(std::istream& is, const char* what) {
  unsigned char b[sizeof(T)];
  if (!is.read(reinterpret_cast<char*>(b), sizeof(T))) throw DataError(std::string("video: truncated ") + what);
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return static_cast<T>(v);
}

}  // namespace

void write_video(std::ostream& os, const FrameSequence& video, PixelType type) {
  if (video.frames.empty()) throw DataError("video: no frames");
  const auto& shape = video.frames[0].shape();
  if (shape.size() != 3) throw ShapeError("video: frames must be {C, H, W}");
  if (shape[0] != modality_channels(video.modality))
    throw ShapeError("video: " + std::to_string(shape[0]) + " channels do not match modality " +
                     std::string(modality_name(video.modality)));
  os.write(kVideoMagic, 4);
  put<std::uint16_t>(os, kVideoVersion);
  put<std::uint8_t>(os, static_cast<std::uint8_t>(modality_tag(video.modality)));
  put<std::uint8_t>(os, static_cast<std::uint8_t>(type));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(shape[2]));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(shape[1]));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(shape[0]));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(video.frames.size()));
  for (const auto& f : video.frames) {
    if (f.shape() != shape) throw ShapeError("video: frame shapes differ");
    if (type == PixelType::kU8) {
      std::vector<char> bytes(f.size());
      for (std::size_t i = 0; i < f.size(); ++i) {
        const double v = f[i];
        if (!(v >= 0.0 && v <= 255.0) || v != std::floor(v))
          throw DataError("video: 8-bit payload needs integer values in [0, 255]");
        bytes[i] = static_cast<char>(static_cast<std::uint8_t>(v));
      }
      os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    } else {
      for (double v : f.data()) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, sizeof bits);
        put<std::uint64_t>(os, bits);
      }
    }
  }
}

FrameSequence read_video(std::istream& is) {
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kVideoMagic, 4) != 0) throw DataError("video: bad magic");
  const auto version = get<std::uint16_t>(is, "header");
  if (version != kVideoVersion) throw DataError("video: unsupported version " + std::to_string(version));
  FrameSequence out;
  out.modality = modality_from_tag(static_cast<char>(get<std::uint8_t>(is, "header")));
  const auto type = get<std::uint8_t>(is, "header");
  if (type != 1 && type != 2) throw DataError("video: unknown pixel type " + std::to_string(type));
  const std::size_t w = get<std::uint32_t>(is, "header");
  const std::size_t h = get<std::uint32_t>(is, "header");
  const std::size_t c = get<std::uint32_t>(is, "header");
  const std::size_t count = get<std::uint32_t>(is, "header");
  if (w == 0 || h == 0 || count == 0) throw DataError("video: empty dimensions");
  if (c != modality_channels(out.modality)) throw DataError("video: channel count does not match modality tag");
  const std::size_t n = c * h * w;
  for (std::size_t k = 0; k < count; ++k) {
    Tensor f({c, h, w});
    if (type == 1) {
      std::vector<unsigned char> bytes(n);
      if (!is.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(n)))
        throw DataError("video: truncated payload in frame " + std::to_string(k));
      for (std::size_t i = 0; i < n; ++i) f[i] = bytes[i];
    } else {
      for (std::size_t i = 0; i < n; ++i) {
        const auto bits = get<std::uint64_t>(is, "payload");
        std::memcpy(&f[i], &bits, sizeof(double));
      }
    }
    out.frames.push_back(std::move(f));
  }
  if (is.peek() != std::char_traits<char>::eof()) throw DataError("video: trailing bytes after payload");
  return out;
}

void save_video(const std::filesystem::path& path, const FrameSequence& video, PixelType type) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write " + path.string());
  write_video(os, video, type);
  if (!os) throw DataError("write failed: " + path.string());
}

FrameSequence load_video(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open video " + path.string());
  try {
    return read_video(is);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

Tensor resize_bilinear(const Tensor& image, std::size_t oh, std::size_t ow) {
  if (image.rank() != 3 || image.empty()) throw ShapeError("resize: expected a nonempty {C, H, W} image");
  const std::size_t c = image.dim(0), ih = image.dim(1), iw = image.dim(2);
  if (ih == oh && iw == ow) return image;
  Tensor out({c, oh, ow});
  auto coord = [](std::size_t o, std::size_t in, std::size_t out_n, std::size_t& i0, std::size_t& i1, double& f) {
    double src = (static_cast<double>(o) + 0.5) * static_cast<double>(in) / static_cast<double>(out_n) - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(in - 1));
    i0 = static_cast<std::size_t>(std::floor(src));
    i1 = std::min(i0 + 1, in - 1);
    f = src - static_cast<double>(i0);
  };
  for (std::size_t y = 0; y < oh; ++y) {
    std::size_t y0, y1;
    double fy;
    coord(y, ih, oh, y0, y1, fy);
    for (std::size_t x = 0; x < ow; ++x) {
      std::size_t x0, x1;
      double fx;
      coord(x, iw, ow, x0, x1, fx);
      for (std::size_t k = 0; k < c; ++k) {
        const double top = (1 - fx) * image.at(k, y0, x0) + fx * image.at(k, y0, x1);
        const double bot = (1 - fx) * image.at(k, y1, x0) + fx * image.at(k, y1, x1);
        out.at(k, y, x) = (1 - fy) * top + fy * bot;
      }
    }
  }
  return out;
}

Tensor preprocess(const Tensor& frame, std::size_t size) {
  Tensor t = resize_bilinear(frame, size, size);
  for (auto& v : t.data()) v /= 255.0;
  return t;
}

double temporal_variance(const FrameSequence& clip) {
  if (clip.frames.empty()) throw DataError("temporal_variance: empty clip");
  const std::size_t n = clip.frames[0].size();
  const double k = static_cast<double>(clip.frames.size());
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0, ss = 0.0;
    for (const auto& f : clip.frames) {
      s += f[i];
      ss += f[i] * f[i];
    }
    total += std::max(0.0, ss / k - (s / k) * (s / k));
  }
  return total / static_cast<double>(n);
}

double depth_planarity(const Tensor& depth) {
  if (depth.rank() != 3 || depth.dim(0) != 1) throw ShapeError("depth_planarity: expected a {1, H, W} frame");
  const std::size_t h = depth.dim(1), w = depth.dim(2);
  // normal equations for z = a + b x + c y
  double sxx = 0, sxy = 0, syy = 0, sx = 0, sy = 0, n = 0, sz = 0, sxz = 0, syz = 0;
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const double X = static_cast<double>(x), Y = static_cast<double>(y), Z = depth.at(0, y, x);
      sxx += X * X; sxy += X * Y; syy += Y * Y; sx += X; sy += Y; n += 1; sz += Z; sxz += X * Z; syz += Y * Z;
    }
  const double m[3][4] = {{n, sx, sy, sz}, {sx, sxx, sxy, sxz}, {sy, sxy, syy, syz}};
  double a[3][4];
  std::memcpy(a, m, sizeof a);
  for (int col = 0; col < 3; ++col) {
    for (int r = col + 1; r < 3; ++r) {
      const double f = a[r][col] / a[col][col];
      for (int k = col; k < 4; ++k) a[r][k] -= f * a[col][k];
    }
  }
  double coef[3];
  for (int r = 2; r >= 0; --r) {
    double s = a[r][3];
    for (int k = r + 1; k < 3; ++k) s -= a[r][k] * coef[k];
    coef[r] = s / a[r][r];
  }
  double ss = 0.0;
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const double r = depth.at(0, y, x) - (coef[0] + coef[1] * static_cast<double>(x) + coef[2] * static_cast<double>(y));
      ss += r * r;
    }
  return std::sqrt(ss / n);
}

}  // namespace sdfas
