#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "sdfas/datasyn.hpp"
#include "sdfas/errors.hpp"
#include "sdfas/trainer.hpp"

using namespace sdfas;

namespace {

std::vector<Parameter> scalar_params(std::vector<double> values, std::vector<double> grads) {
  std::vector<Parameter> out;
  for (std::size_t i = 0; i < values.size(); ++i)
    out.push_back({"p" + std::to_string(i), Tensor::scalar(values[i]), Tensor::scalar(grads[i])});
  return out;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

// Channel 0 holds x, channel 1 holds y, channel 2 a constant.
Tensor coordinate_grid(std::size_t channels, std::size_t size) {
  Tensor t({channels, size, size});
  for (std::size_t y = 0; y < size; ++y)
    for (std::size_t x = 0; x < size; ++x)
      for (std::size_t c = 0; c < channels; ++c) t.at(c, y, x) = c == 0 ? double(x) : c == 1 ? double(y) : 0.5;
  return t;
}

SynthConfig small_corpus() {
  SynthConfig cfg;
  cfg.subjects_per_ethnicity = 5;
  cfg.clip_length = 8;
  cfg.frame_size = 20;
  return cfg;
}

std::vector<PreparedVideo> small_videos(const Manifest& entries, const std::vector<Modality>& mods,
                                        std::size_t size, std::size_t threads = 1) {
  const SynthConfig cfg = small_corpus();
  return prepare_videos(
      entries, [&cfg](const ManifestEntry& e) { return render_clip(cfg, e); }, mods, size, RankPoolConfig{},
      threads);
}

Manifest subject_entries(int subject) {
  Manifest out;
  for (const auto& e : synth_manifest(small_corpus()))
    if (e.subject_id == subject && e.ethnicity == Ethnicity::kAfrica) out.push_back(e);
  return out;
}

}  // namespace

TEST_CASE("adam first step moves each coordinate by lr against the gradient sign") {
  auto params = scalar_params({1.0, -2.0, 0.5, 3.0}, {0.5, -3.0, 1e-2, 40.0});
  AdamState state;
  const double lr = 0.01;
  adam_step(params, state, lr);
  CHECK(state.step == 1);
  const double expected[] = {1.0 - lr, -2.0 + lr, 0.5 - lr, 3.0 - lr};
  for (std::size_t i = 0; i < params.size(); ++i) CHECK(std::abs(params[i].value.item() - expected[i]) <= lr * 1e-6);
}

TEST_CASE("adam with zero gradient leaves parameters and decays moments") {
  auto params = scalar_params({1.0}, {2.0});
  AdamState state;
  adam_step(params, state, 0.1);
  const double after_first = params[0].value.item();
  const double m = state.m[0].item(), v = state.v[0].item();
  params[0].grad = Tensor::scalar(0.0);
  // bias correction of step 2 still yields a nonzero move from the stored
  // moments, so only a fresh state shows the "unchanged" property
  AdamState fresh;
  auto zero = scalar_params({1.0}, {0.0});
  adam_step(zero, fresh, 0.1);
  CHECK(zero[0].value.item() == 1.0);
  CHECK(fresh.m[0].item() == 0.0);
  CHECK(fresh.v[0].item() == 0.0);
  adam_step(params, state, 0.0);
  CHECK(params[0].value.item() == after_first);
  CHECK(state.m[0].item() == 0.9 * m);
  CHECK(state.v[0].item() == 0.999 * v);
}

TEST_CASE("adam under a constant gradient approaches lr per step") {
  // For constant g the bias-corrected moments are g and g^2 at every step,
  // so the step is lr * |g| / (|g| + eps).
  for (double g : {0.3, -2.0, 1e-3}) {
    auto params = scalar_params({0.0}, {g});
    AdamState state;
    double before = 0.0;
    for (int i = 0; i < 10000; ++i) {
      before = params[0].value.item();
      adam_step(params, state, 1e-3);
    }
    const double step = params[0].value.item() - before;
    CHECK(std::abs(std::abs(step) - 1e-3) <= 1e-3 * 1e-3);
    CHECK(step * g < 0.0);
  }
}

TEST_CASE("adam rejects non-finite gradients by name") {
  auto params = scalar_params({1.0, 2.0}, {0.1, std::nan("")});
  params[1].name = "color/head_s.w";
  AdamState state;
  try {
    adam_step(params, state, 0.1);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("color/head_s.w") != std::string::npos);
  }
  CHECK(params[0].value.item() == 1.0);
  CHECK(state.step == 0);
}

TEST_CASE("learning-rate schedule") {
  TrainConfig cfg = TrainConfig::full_scale();
  CHECK(lr_at(0, cfg) == 0.1);
  CHECK(lr_at(14, cfg) == 0.1);
  CHECK(lr_at(15, cfg) == doctest::Approx(0.01).epsilon(1e-15));
  CHECK(lr_at(19, cfg) == doctest::Approx(0.01).epsilon(1e-15));
  CHECK(lr_at(20, cfg) == doctest::Approx(0.001).epsilon(1e-15));
  CHECK(lr_at(24, cfg) == doctest::Approx(0.001).epsilon(1e-15));
  CHECK_THROWS_AS(lr_at(25, cfg), UsageError);
  CHECK_THROWS_AS(lr_at(-1, cfg), UsageError);
  CHECK(TrainConfig{}.lr0 == 1e-3);

  TrainConfig bad = cfg;
  bad.decay_epochs = {20, 15};
  CHECK_THROWS_AS(bad.validate(), UsageError);
  bad = cfg;
  bad.decay_epochs = {15, 25};
  CHECK_THROWS_AS(bad.validate(), UsageError);
  bad = cfg;
  bad.batch_size = 0;
  CHECK_THROWS_AS(bad.validate(), UsageError);
  bad = cfg;
  bad.window = 1;
  CHECK_THROWS_AS(bad.validate(), UsageError);
  CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("uniform draws") {
  std::mt19937_64 rng(7);
  std::vector<int> hist(5, 0);
  for (int i = 0; i < 50000; ++i) {
    const double u = uniform01(rng);
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    ++hist[uniform_index(rng, 5)];
  }
  for (int h : hist) CHECK(std::abs(h - 10000) < 400);
}

TEST_CASE("flip twice is the identity and zero config changes nothing") {
  std::mt19937_64 rng(3);
  Tensor img({3, 9, 8});
  for (auto& v : img.data()) v = uniform01(rng);
  GeometricTransform flip;
  flip.flip = true;
  const Tensor once = warp(img, flip);
  CHECK_FALSE(once == img);
  CHECK(warp(once, flip) == img);
  CHECK(once.at(1, 4, 0) == img.at(1, 4, 7));

  NetInputs in;
  for (auto m : kAllModalities) {
    Tensor s({modality_channels(m), 8, 8}), d({modality_channels(m), 8, 8});
    for (auto& v : s.data()) v = uniform01(rng);
    for (auto& v : d.data()) v = uniform01(rng);
    in.emplace(m, ModalityInput{s, d});
  }
  std::mt19937_64 a(11);
  const auto out = augment(in, a, AugmentConfig::none());
  for (auto m : kAllModalities) {
    CHECK(out.at(m).static_img == in.at(m).static_img);
    CHECK(out.at(m).dynamic_img == in.at(m).dynamic_img);
  }
}

TEST_CASE("augmentation is seeded and applies one geometry to every image") {
  const std::size_t size = 16;
  NetInputs in;
  for (auto m : kAllModalities) {
    const auto grid = coordinate_grid(modality_channels(m) == 3 ? 3 : 1, size);
    in.emplace(m, ModalityInput{grid, grid});
  }
  AugmentConfig cfg;
  cfg.brightness = 0.0;
  cfg.contrast = 0.0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    std::mt19937_64 r1(seed), r2(seed), probe(seed);
    const auto a = augment(in, r1, cfg);
    const auto b = augment(in, r2, cfg);
    const GeometricTransform t = sample_geometry(probe, cfg, size);
    const double cx = (size - 1) / 2.0;
    for (auto m : kAllModalities) {
      CHECK(a.at(m).static_img == b.at(m).static_img);
      CHECK(a.at(m).static_img == a.at(m).dynamic_img);
    }
    // Pixels whose source lies inside the image read back their source
    // coordinates, which must follow flip, rotation and crop.
    const auto& rgb = a.at(Modality::kColor).static_img;
    std::size_t interior = 0;
    for (std::size_t y = 0; y < size; ++y)
      for (std::size_t x = 0; x < size; ++x) {
        double u = t.scale * (double(x) - cx), v = t.scale * (double(y) - cx);
        const double ru = std::cos(t.angle) * u - std::sin(t.angle) * v;
        const double rv = std::sin(t.angle) * u + std::cos(t.angle) * v;
        const double sx = cx + t.shift_x + (t.flip ? -ru : ru);
        const double sy = cx + t.shift_y + rv;
        if (sx < 0 || sy < 0 || sx > size - 1 || sy > size - 1) continue;
        ++interior;
        CHECK(std::abs(rgb.at(0, y, x) - sx) <= 1e-9);
        CHECK(std::abs(rgb.at(1, y, x) - sy) <= 1e-9);
        CHECK(std::abs(a.at(Modality::kDepth).static_img.at(0, y, x) - sx) <= 1e-9);
      }
    CHECK(interior > 0);
  }
}

TEST_CASE("color distortion touches only the RGB static image") {
  NetInputs in;
  std::mt19937_64 fill(5);
  for (auto m : kAllModalities) {
    Tensor s({modality_channels(m), 8, 8}), d({modality_channels(m), 8, 8});
    for (auto& v : s.data()) v = 0.2 + 0.6 * uniform01(fill);
    for (auto& v : d.data()) v = uniform01(fill);
    in.emplace(m, ModalityInput{s, d});
  }
  AugmentConfig cfg = AugmentConfig::none();
  cfg.brightness = 0.2;
  cfg.contrast = 0.3;
  std::mt19937_64 rng(9);
  const auto out = augment(in, rng, cfg);
  CHECK_FALSE(out.at(Modality::kColor).static_img == in.at(Modality::kColor).static_img);
  CHECK(out.at(Modality::kColor).dynamic_img == in.at(Modality::kColor).dynamic_img);
  for (auto m : {Modality::kDepth, Modality::kIr}) {
    CHECK(out.at(m).static_img == in.at(m).static_img);
    CHECK(out.at(m).dynamic_img == in.at(m).dynamic_img);
  }
  for (double v : out.at(Modality::kColor).static_img.data()) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  CHECK_THROWS_AS(AugmentConfig({0.0, 1.5, 1.0, 1.0, 0.0, 0.0}).validate(), UsageError);
}

TEST_CASE("prepare_videos groups presentations and caches dynamic images") {
  const auto entries = subject_entries(1);
  const auto videos = small_videos(entries, {Modality::kColor, Modality::kDepth, Modality::kIr}, 16);
  REQUIRE(videos.size() == 4);
  CHECK(videos[0].id == "A-0001-real-1");
  CHECK(videos[0].label == Label::kBonaFide);
  CHECK(videos[1].pai == "print");
  for (const auto& v : videos) {
    CHECK(v.length() == 8);
    CHECK(v.clips.size() == 3);
    CHECK(v.clips.at(Modality::kColor).frames[0].channels == 3);
    CHECK(v.clips.at(Modality::kColor).frames[0].width == 16);
  }
  // a still print has an all-zero dynamic image, shown as mid gray
  for (const auto& d : videos[1].clips.at(Modality::kDepth).dynamics)
    for (auto p : d.pixels) CHECK(p == 128);
  const auto& real = videos[0].clips.at(Modality::kColor).dynamics[7].pixels;
  CHECK(*std::max_element(real.begin(), real.end()) == 255);
  CHECK(*std::min_element(real.begin(), real.end()) == 0);

  const auto threaded = small_videos(entries, {Modality::kColor, Modality::kDepth, Modality::kIr}, 16, 3);
  for (std::size_t i = 0; i < videos.size(); ++i)
    for (auto m : kAllModalities) {
      CHECK(threaded[i].clips.at(m).frames[3].pixels == videos[i].clips.at(m).frames[3].pixels);
      CHECK(threaded[i].clips.at(m).dynamics[5].pixels == videos[i].clips.at(m).dynamics[5].pixels);
    }

  Manifest no_ir;
  for (const auto& e : entries)
    if (e.modality != Modality::kIr) no_ir.push_back(e);
  CHECK_THROWS_AS(small_videos(no_ir, {Modality::kColor, Modality::kIr}, 16), DataError);
  CHECK(small_videos(no_ir, {Modality::kDepth}, 16).size() == 4);
}

TEST_CASE("scores of zero-init heads are one half") {
  const auto videos = small_videos(subject_entries(2), {Modality::kColor, Modality::kDepth, Modality::kIr}, 16);
  auto net = build_psmm(BackboneSpec::tiny(), FusionVariant::kPsmm);
  for (const auto& v : videos) CHECK(score_video(net, v, 7) == 0.5);
  const auto set = score_videos(net, videos, 7, "1_1");
  CHECK(set.size() == 4);
  CHECK(set[2].subprotocol == "1_1");
  const auto color_only = small_videos(subject_entries(2), {Modality::kColor}, 16);
  CHECK_THROWS_AS(score_video(net, color_only[0], 7), DataError);
}

TEST_CASE("overfitting a single repeated sample") {
  const auto videos = small_videos(subject_entries(201), {Modality::kColor, Modality::kDepth, Modality::kIr}, 32);
  const std::vector<PreparedVideo> one{videos[0]};
  auto net = build_network(NetConfig{});
  TrainConfig cfg;
  cfg.epochs = 200;
  cfg.decay_epochs = {};
  cfg.batch_size = 1;
  const auto result = train(net, one, nullptr, cfg, AugmentConfig::none());
  CHECK(result.steps == 200);
  CHECK(result.epochs.front().loss.total == doctest::Approx(13.0 * std::numbers::ln2).epsilon(1e-12));
  CHECK(result.epochs.back().loss.total < 1e-2);
}

TEST_CASE("training writes logs and checkpoints deterministically") {
  const auto root = std::filesystem::temp_directory_path() / "sdfas_test_train";
  std::filesystem::remove_all(root);
  const auto videos = small_videos(subject_entries(301), {Modality::kColor}, 16);
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.decay_epochs = {2};
  cfg.batch_size = 2;
  cfg.seed = 5;
  auto run = [&](const std::string& name) {
    auto net = build_sdnet(BackboneSpec::tiny(), Modality::kColor);
    net.init_parameters(5);
    return train(net, videos, &videos, cfg, AugmentConfig{}, TrainOutput{root / name});
  };
  const auto a = run("a");
  const auto b = run("b");
  REQUIRE(a.epochs.size() == 3);
  CHECK(a.epochs[0].loss.total == b.epochs[0].loss.total);
  CHECK(a.epochs[2].loss.total == b.epochs[2].loss.total);
  CHECK(a.epochs[2].lr == doctest::Approx(1e-4));
  CHECK(slurp(root / "a/model.ckpt") == slurp(root / "b/model.ckpt"));
  CHECK(slurp(root / "a/train_log.jsonl") == slurp(root / "b/train_log.jsonl"));
  CHECK(slurp(root / "a/model.ckpt") == slurp(root / "a/epoch_03.ckpt"));
  REQUIRE(a.epochs[0].validation.has_value());

  // balanced sampling: 1 real and 3 attack videos give 3 + 3 samples per epoch
  CHECK(a.steps == 9);
  std::ifstream log(root / "a/train_log.jsonl");
  std::string line;
  std::size_t steps = 0, epochs = 0;
  while (std::getline(log, line)) {
    const auto j = nlohmann::json::parse(line);
    if (j["type"] == "step") ++steps;
    if (j["type"] == "epoch") {
      ++epochs;
      CHECK(j["loss"]["color"].contains("sdf"));
      CHECK(j["valid"].contains("acer"));
      const double total = j["loss"]["total"];
      CHECK(total == a.epochs[epochs - 1].loss.total);
    }
  }
  CHECK(steps == 9);
  CHECK(epochs == 3);
  std::filesystem::remove_all(root);
}

TEST_CASE("non-finite loss aborts and keeps the last good checkpoint") {
  const auto root = std::filesystem::temp_directory_path() / "sdfas_test_abort";
  std::filesystem::remove_all(root);
  const auto videos = small_videos(subject_entries(302), {Modality::kDepth}, 16);
  auto net = build_sdnet(BackboneSpec::tiny(), Modality::kDepth);
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.decay_epochs = {};
  cfg.batch_size = 4;
  auto poison = [&net](const EpochRecord& r) {
    if (r.epoch == 1) net.graph().parameter("depth/head_s.w").value[0] = std::nan("");
  };
  CHECK_THROWS_AS(train(net, videos, nullptr, cfg, AugmentConfig::none(), TrainOutput{root}, poison), NumericError);
  CHECK(std::filesystem::exists(root / "model.ckpt"));
  CHECK_FALSE(std::filesystem::exists(root / "epoch_02.ckpt"));
  CHECK(slurp(root / "model.ckpt") == slurp(root / "epoch_01.ckpt"));
  std::filesystem::remove_all(root);
}
