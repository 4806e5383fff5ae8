#include "sdfas/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <limits>
#include <numbers>
#include <thread>

#include "json.hpp"

#include "sdfas/checkpoint.hpp"
#include "sdfas/datasyn.hpp"
#include "sdfas/errors.hpp"

namespace sdfas {

void AdamConfig::validate() const {
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw UsageError("adam beta1 must lie in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw UsageError("adam beta2 must lie in [0, 1)");
  if (!(epsilon > 0.0)) throw UsageError("adam epsilon must be positive");
}

void adam_step(std::vector<Parameter>& params, AdamState& state, double lr, const AdamConfig& cfg) {
  for (const auto& p : params) {
    if (p.grad.shape() != p.value.shape())
      throw ShapeError("adam: gradient of " + p.name + " has shape " + shape_str(p.grad.shape()) + ", parameter " +
                       shape_str(p.value.shape()));
    if (!p.grad.all_finite()) throw NumericError("adam: non-finite gradient for parameter " + p.name);
  }
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.value.shape());
      state.v.emplace_back(p.value.shape());
    }
  }
  if (state.m.size() != params.size()) throw ShapeError("adam: state does not match the parameter list");
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto value = params[k].value.data();
    const auto grad = params[k].grad.data();
    auto m = state.m[k].data();
    auto v = state.v[k].data();
    if (m.size() != value.size()) throw ShapeError("adam: state shape mismatch for " + params[k].name);
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double g = grad[i];
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
      value[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg.epsilon);
    }
  }
}

void TrainConfig::validate() const {
  adam.validate();
  if (epochs < 1) throw UsageError("epochs must be at least 1");
  if (!(lr0 > 0.0) || !std::isfinite(lr0)) throw UsageError("learning rate must be positive");
  if (!(decay_factor > 0.0)) throw UsageError("decay factor must be positive");
  for (std::size_t i = 0; i < decay_epochs.size(); ++i) {
    if (decay_epochs[i] < 1 || decay_epochs[i] >= epochs)
      throw UsageError("decay epochs must lie in [1, epochs)");
    if (i > 0 && decay_epochs[i] <= decay_epochs[i - 1]) throw UsageError("decay epochs must be strictly increasing");
  }
  if (batch_size < 1) throw UsageError("batch size must be at least 1");
  if (window < 2) throw UsageError("rank-pool window must be at least 2");
  if (samples_per_video < 1) throw UsageError("samples per video must be at least 1");
}

TrainConfig TrainConfig::full_scale() {
  TrainConfig cfg;
  cfg.lr0 = 0.1;
  return cfg;
}

double lr_at(int epoch, const TrainConfig& cfg) {
  if (epoch < 0 || epoch >= cfg.epochs)
    throw UsageError("epoch " + std::to_string(epoch) + " outside [0, " + std::to_string(cfg.epochs) + ")");
  double lr = cfg.lr0;
  for (int e : cfg.decay_epochs)
    if (epoch >= e) lr /= cfg.decay_factor;
  return lr;
}

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

double uniform(std::mt19937_64& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

std::size_t uniform_index(std::mt19937_64& rng, std::size_t n) {
  if (n == 0) throw UsageError("uniform_index: empty range");
  // rejection sampling keeps the draw unbiased
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t r;
  do r = rng();
  while (r >= limit);
  return static_cast<std::size_t>(r % n);
}

void AugmentConfig::validate() const {
  if (!(max_rotation_deg >= 0.0 && max_rotation_deg <= 180.0)) throw UsageError("rotation range must lie in [0, 180]");
  if (!(flip_probability >= 0.0 && flip_probability <= 1.0)) throw UsageError("flip probability must lie in [0, 1]");
  if (!(min_crop_scale > 0.0 && min_crop_scale <= max_crop_scale && max_crop_scale <= 1.0))
    throw UsageError("crop scales must satisfy 0 < min <= max <= 1");
  if (!(brightness >= 0.0 && brightness <= 1.0)) throw UsageError("brightness magnitude must lie in [0, 1]");
  if (!(contrast >= 0.0 && contrast <= 1.0)) throw UsageError("contrast magnitude must lie in [0, 1]");
}

AugmentConfig AugmentConfig::none() {
  return AugmentConfig{0.0, 0.0, 1.0, 1.0, 0.0, 0.0};
}

std::pair<double, double> GeometricTransform::source(double x, double y, std::size_t height,
                                                     std::size_t width) const {
  const double cx = (static_cast<double>(width) - 1.0) / 2.0;
  const double cy = (static_cast<double>(height) - 1.0) / 2.0;
  const double u = scale * (x - cx);
  const double v = scale * (y - cy);
  double qx = u, qy = v;
  if (angle != 0.0) {
    const double c = std::cos(angle), s = std::sin(angle);
    qx = c * u - s * v;
    qy = s * u + c * v;
  }
  if (flip) qx = -qx;
  return {cx + shift_x + qx, cy + shift_y + qy};
}

GeometricTransform sample_geometry(std::mt19937_64& rng, const AugmentConfig& cfg, std::size_t size) {
  GeometricTransform t;
  const double max_angle = cfg.max_rotation_deg * std::numbers::pi / 180.0;
  t.angle = uniform(rng, -max_angle, max_angle);
  t.flip = uniform01(rng) < cfg.flip_probability;
  t.scale = uniform(rng, cfg.min_crop_scale, cfg.max_crop_scale);
  const double room = (1.0 - t.scale) * static_cast<double>(size) / 2.0;
  t.shift_x = uniform(rng, -room, room);
  t.shift_y = uniform(rng, -room, room);
  return t;
}

ColorJitter sample_color(std::mt19937_64& rng, const AugmentConfig& cfg) {
  ColorJitter c;
  c.brightness = uniform(rng, -cfg.brightness, cfg.brightness);
  c.contrast = uniform(rng, 1.0 - cfg.contrast, 1.0 + cfg.contrast);
  return c;
}

Tensor warp(const Tensor& image, const GeometricTransform& t) {
  if (image.rank() != 3) throw ShapeError("warp: expected a {C, H, W} image");
  if (t.identity()) return image;
  const std::size_t ch = image.dim(0), h = image.dim(1), w = image.dim(2);
  Tensor out({ch, h, w});
  auto read = [&](std::size_t c, long y, long x) {
    y = std::clamp(y, 0L, static_cast<long>(h) - 1);
    x = std::clamp(x, 0L, static_cast<long>(w) - 1);
    return image.at(c, static_cast<std::size_t>(y), static_cast<std::size_t>(x));
  };
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const auto [sx, sy] = t.source(static_cast<double>(x), static_cast<double>(y), h, w);
      const double fx0 = std::floor(sx), fy0 = std::floor(sy);
      const double fx = sx - fx0, fy = sy - fy0;
      const long x0 = static_cast<long>(fx0), y0 = static_cast<long>(fy0);
      for (std::size_t c = 0; c < ch; ++c) {
        double v = (1.0 - fy) * (1.0 - fx) * read(c, y0, x0);
        if (fx != 0.0) v += (1.0 - fy) * fx * read(c, y0, x0 + 1);
        if (fy != 0.0) v += fy * (1.0 - fx) * read(c, y0 + 1, x0);
        if (fx != 0.0 && fy != 0.0) v += fy * fx * read(c, y0 + 1, x0 + 1);
        out.at(c, y, x) = v;
      }
    }
  return out;
}

Tensor apply_color(const Tensor& image, const ColorJitter& c) {
  if (c.brightness == 0.0 && c.contrast == 1.0) return image;
  double mean = 0.0;
  for (double v : image.data()) mean += v;
  mean /= static_cast<double>(std::max<std::size_t>(1, image.size()));
  Tensor out = image;
  for (auto& v : out.data()) v = std::clamp((v - mean) * c.contrast + mean + c.brightness, 0.0, 1.0);
  return out;
}

NetInputs augment(const NetInputs& inputs, std::mt19937_64& rng, const AugmentConfig& cfg) {
  if (inputs.empty()) return inputs;
  const std::size_t size = inputs.begin()->second.static_img.dim(1);
  const GeometricTransform geo = sample_geometry(rng, cfg, size);
  const ColorJitter color = sample_color(rng, cfg);
  NetInputs out;
  for (const auto& [m, in] : inputs) {
    if (in.static_img.shape() != in.dynamic_img.shape())
      throw ShapeError("augment: static and dynamic " + std::string(modality_name(m)) + " images differ in shape");
    ModalityInput a{warp(in.static_img, geo), warp(in.dynamic_img, geo)};
    if (m == Modality::kColor) a.static_img = apply_color(a.static_img, color);
    out.emplace(m, std::move(a));
  }
  return out;
}

std::size_t PreparedVideo::length() const { return clips.empty() ? 0 : clips.begin()->second.frames.size(); }

namespace {

Image8 quantize(const Tensor& t) {
  Image8 img{t.dim(0), t.dim(1), t.dim(2), std::vector<std::uint8_t>(t.size())};
  for (std::size_t i = 0; i < t.size(); ++i)
    img.pixels[i] = static_cast<std::uint8_t>(std::clamp(std::floor(t[i] + 0.5), 0.0, 255.0));
  return img;
}

PreparedClip prepare_clip(const FrameSequence& clip, std::size_t size, const RankPoolConfig& pool) {
  FrameSequence resized;
  resized.modality = clip.modality;
  PreparedClip out;
  for (const auto& f : clip.frames) {
    resized.frames.push_back(resize_bilinear(f, size, size));
    out.frames.push_back(quantize(resized.frames.back()));
  }
  for (std::size_t i = 0; i < resized.frames.size(); ++i)
    out.dynamics.push_back(to_display(dynamic_image_at(resized, i, pool).d));
  return out;
}

}  // namespace

std::vector<PreparedVideo> prepare_videos(const Manifest& entries, const ClipLoader& load,
                                          const std::vector<Modality>& modalities, std::size_t size,
                                          const RankPoolConfig& pool, std::size_t threads) {
  pool.validate();
  if (modalities.empty()) throw UsageError("prepare_videos: no modalities requested");
  std::vector<std::string> order;
  std::map<std::string, std::vector<const ManifestEntry*>> groups;
  for (const auto& e : entries) {
    auto id = e.presentation_id();
    auto [it, fresh] = groups.try_emplace(id);
    if (fresh) order.push_back(id);
    it->second.push_back(&e);
  }

  std::vector<PreparedVideo> out(order.size());
  std::vector<std::exception_ptr> errors(order.size());
  auto work = [&](std::size_t i) {
    const auto& group = groups.at(order[i]);
    PreparedVideo& v = out[i];
    v.id = order[i];
    v.label = group.front()->label();
    v.pai = std::string(pai_name(group.front()->attack));
    for (auto m : modalities) {
      auto it = std::find_if(group.begin(), group.end(), [m](const ManifestEntry* e) { return e->modality == m; });
      if (it == group.end())
        throw DataError("presentation " + v.id + " has no " + std::string(modality_name(m)) + " clip");
      FrameSequence clip = load(**it);
      if (clip.modality != m || clip.frames.empty())
        throw DataError("clip " + (*it)->video_path + " is empty or holds the wrong modality");
      v.clips.emplace(m, prepare_clip(clip, size, pool));
      if (v.clips.at(m).frames.size() != v.clips.begin()->second.frames.size())
        throw DataError("presentation " + v.id + " has clips of different lengths");
    }
  };
  auto guarded = [&](std::size_t i) {
    try {
      work(i);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };

  const std::size_t n_threads = std::max<std::size_t>(1, std::min(threads, order.size()));
  if (n_threads == 1) {
    for (std::size_t i = 0; i < order.size(); ++i) guarded(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> workers;
    for (std::size_t t = 0; t < n_threads; ++t)
      workers.emplace_back([&] {
        for (std::size_t i = next++; i < order.size(); i = next++) guarded(i);
      });
    for (auto& w : workers) w.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

std::vector<PreparedVideo> prepare_videos(const Manifest& entries, const std::filesystem::path& root,
                                          const std::vector<Modality>& modalities, std::size_t size,
                                          const RankPoolConfig& pool, std::size_t threads) {
  return prepare_videos(
      entries, [&root](const ManifestEntry& e) { return load_video(root / e.video_path); }, modalities, size, pool,
      threads);
}

Tensor to_tensor(const Image8& image) {
  Tensor t({image.channels, image.height, image.width});
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<double>(image.pixels[i]) / 255.0;
  return t;
}

NetInputs frame_inputs(const PreparedVideo& video, std::size_t frame) {
  NetInputs in;
  for (const auto& [m, clip] : video.clips) {
    if (frame >= clip.frames.size()) throw DataError("frame " + std::to_string(frame) + " beyond video " + video.id);
    in.emplace(m, ModalityInput{to_tensor(clip.frames[frame]), to_tensor(clip.dynamics[frame])});
  }
  return in;
}

namespace {

void accumulate(LossBundle& acc, const LossBundle& b) {
  for (const auto& [m, l] : b.per_modality) {
    auto& a = acc.per_modality[m];
    a.s += l.s;
    a.d += l.d;
    a.f += l.f;
    a.sdf += l.sdf;
    a.total += l.total;
  }
  if (b.whole) acc.whole = acc.whole.value_or(0.0) + *b.whole;
  acc.total += b.total;
}

LossBundle scaled(LossBundle b, double k) {
  for (auto& [m, l] : b.per_modality) {
    l.s *= k;
    l.d *= k;
    l.f *= k;
    l.sdf *= k;
    l.total *= k;
  }
  if (b.whole) *b.whole *= k;
  b.total *= k;
  return b;
}

nlohmann::json loss_json(const LossBundle& b) {
  nlohmann::json j;
  j["total"] = b.total;
  if (b.whole) j["whole"] = *b.whole;
  for (const auto& [m, l] : b.per_modality)
    j[std::string(modality_name(m))] = {{"s", l.s}, {"d", l.d}, {"f", l.f}, {"sdf", l.sdf}, {"total", l.total}};
  return j;
}

void save_atomically(const std::filesystem::path& path, const Graph& graph) {
  auto tmp = path;
  tmp += ".tmp";
  save_checkpoint(tmp, graph);
  std::filesystem::rename(tmp, path);
}

}  // namespace

TrainResult train(Network& net, const std::vector<PreparedVideo>& train_set, const std::vector<PreparedVideo>* valid,
                  const TrainConfig& cfg, const AugmentConfig& aug, const TrainOutput& out,
                  const std::function<void(const EpochRecord&)>& on_epoch) {
  cfg.validate();
  aug.validate();
  if (train_set.empty()) throw DataError("train: empty training set");
  for (const auto& v : train_set)
    if (v.length() == 0) throw DataError("train: video " + v.id + " has no frames");

  std::ofstream log;
  const bool writing = !out.dir.empty();
  if (writing) {
    std::filesystem::create_directories(out.dir);
    log.open(out.dir / "train_log.jsonl", std::ios::binary);
    if (!log) throw DataError("cannot write " + (out.dir / "train_log.jsonl").string());
  }

  auto& params = net.graph().parameters();
  std::vector<Tensor> grad_sum;
  for (const auto& p : params) grad_sum.emplace_back(p.value.shape());
  AdamState state;
  std::mt19937_64 rng(cfg.seed);
  TrainResult result;

  std::size_t class_count[2] = {0, 0};
  for (const auto& v : train_set) ++class_count[static_cast<int>(v.label)];
  const std::size_t majority = std::max(class_count[0], class_count[1]);
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < train_set.size(); ++i) {
    std::size_t repeats = cfg.samples_per_video;
    // minority-class videos are repeated so both classes contribute equally
    if (cfg.balance_classes) {
      const std::size_t n = class_count[static_cast<int>(train_set[i].label)];
      repeats = (cfg.samples_per_video * majority + n / 2) / n;
    }
    for (std::size_t k = 0; k < repeats; ++k) order.push_back(i);
  }

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = lr_at(epoch, cfg);
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[uniform_index(rng, i)]);
    LossBundle epoch_sum;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      for (auto& g : grad_sum) g.fill(0.0);
      LossBundle batch_sum;
      for (std::size_t k = start; k < end; ++k) {
        const PreparedVideo& video = train_set[order[k]];
        const std::size_t frame = uniform_index(rng, video.length());
        net.forward(augment(frame_inputs(video, frame), rng, aug), video.label);
        const LossBundle loss = net.losses();
        if (!std::isfinite(loss.total))
          throw NumericError("non-finite loss at epoch " + std::to_string(epoch + 1) + ", step " +
                             std::to_string(result.steps + 1) + " (video " + video.id + ")" +
                             (result.checkpoint.empty() ? std::string()
                                                        : "; last good checkpoint " + result.checkpoint.string()));
        net.graph().backward(net.total_loss());
        for (std::size_t p = 0; p < params.size(); ++p) {
          auto acc = grad_sum[p].data();
          const auto g = params[p].grad.data();
          for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += g[i];
        }
        accumulate(batch_sum, loss);
      }
      const double inv = 1.0 / static_cast<double>(end - start);
      for (std::size_t p = 0; p < params.size(); ++p) {
        auto g = params[p].grad.data();
        const auto acc = grad_sum[p].data();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] = acc[i] * inv;
      }
      adam_step(params, state, lr, cfg.adam);
      ++result.steps;
      accumulate(epoch_sum, batch_sum);
      if (writing) {
        nlohmann::json j{{"type", "step"}, {"epoch", epoch + 1}, {"step", result.steps}, {"lr", lr}};
        j["loss"] = loss_json(scaled(batch_sum, inv));
        log << j.dump() << '\n';
      }
    }

    EpochRecord rec;
    rec.epoch = epoch + 1;
    rec.lr = lr;
    rec.loss = scaled(epoch_sum, 1.0 / static_cast<double>(order.size()));
    if (valid && !valid->empty()) {
      const ScoredSet scores = score_videos(net, *valid, cfg.window, "valid");
      const bool both = std::any_of(scores.begin(), scores.end(), [](const auto& e) { return e.label == Label::kBonaFide; }) &&
                        std::any_of(scores.begin(), scores.end(), [](const auto& e) { return e.label == Label::kAttack; });
      if (both) {
        const double targets[] = {1e-2};
        rec.validation = evaluate(scores, 0.5, targets);
      }
    }
    if (writing) {
      if (out.keep_epoch_checkpoints) {
        char name[32];
        std::snprintf(name, sizeof name, "epoch_%02d.ckpt", rec.epoch);
        save_checkpoint(out.dir / name, net.graph());
      }
      result.checkpoint = out.dir / "model.ckpt";
      save_atomically(result.checkpoint, net.graph());
      nlohmann::json j{{"type", "epoch"}, {"epoch", rec.epoch}, {"step", result.steps}, {"lr", lr}};
      j["loss"] = loss_json(rec.loss);
      if (rec.validation) {
        const auto& v = *rec.validation;
        j["valid"] = {{"apcer", v.rates.apcer}, {"bpcer", v.rates.bpcer}, {"acer", v.rates.acer}, {"auc", v.auc}};
      }
      log << j.dump() << '\n';
      log.flush();
    }
    result.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  return result;
}

double score_video(Network& net, const PreparedVideo& video, std::size_t window) {
  const std::size_t n = video.length();
  if (n == 0) throw DataError("video " + video.id + " has no frames");
  const std::size_t first = std::min(window > 0 ? window - 1 : 0, n - 1);
  double sum = 0.0;
  for (std::size_t i = first; i < n; ++i) {
    net.forward(frame_inputs(video, i), Label::kAttack);
    sum += net.score();
  }
  const double s = sum / static_cast<double>(n - first);
  if (!std::isfinite(s)) throw NumericError("non-finite score for video " + video.id);
  return s;
}

ScoredSet score_videos(Network& net, const std::vector<PreparedVideo>& videos, std::size_t window,
                       const std::string& subprotocol) {
  ScoredSet out;
  for (const auto& v : videos) out.push_back({v.id, score_video(net, v, window), v.label, v.pai, subprotocol});
  return out;
}

}  // namespace sdfas
