#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "sdfas/ablation.hpp"
#include "sdfas/config.hpp"
#include "sdfas/errors.hpp"
#include "sdfas/pnm.hpp"
#include "sdfas/runrecord.hpp"
#include "sdfas/selftest.hpp"

using namespace sdfas;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("sdfas_support_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("key-value text parses comments and rejects duplicates") {
  std::istringstream ok("# header\n\n epochs = 3 \nlr=0.01\n");
  const auto kv = read_key_values(ok);
  CHECK(kv.size() == 2);
  CHECK(kv.at("epochs") == "3");
  CHECK(kv.at("lr") == "0.01");

  std::istringstream dup("a = 1\na = 2\n");
  CHECK_THROWS_AS(read_key_values(dup), DataError);
  std::istringstream bad("a = 1\nnonsense\n");
  try {
    read_key_values(bad);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
}

TEST_CASE("experiment config overrides and round trips") {
  ExperimentConfig c;
  apply_overrides(c, {{"epochs", "4"}, {"lr", "full_scale"}, {"decay_epochs", "none"}, {"variant", "nhf"}, {"modalities", "rd"}});
  CHECK(c.train.epochs == 4);
  CHECK(c.train.lr0 == 0.1);
  CHECK(c.train.decay_epochs.empty());
  CHECK(c.net.variant == FusionVariant::kNhf);
  CHECK(c.net.modalities.size() == 2);
  c.validate();

  ExperimentConfig back;
  apply_overrides(back, to_key_values(c));
  CHECK(to_key_values(back) == to_key_values(c));

  CHECK_THROWS_AS(apply_overrides(c, {{"epoch", "4"}}), UsageError);
  CHECK_THROWS_AS(apply_overrides(c, {{"epochs", "0"}}), UsageError);
  CHECK_THROWS_AS(apply_overrides(c, {{"epochs", "x"}}), UsageError);
  CHECK_THROWS_AS(apply_overrides(c, {{"deterministic", "maybe"}}), UsageError);
  CHECK_THROWS_AS(apply_overrides(c, {{"backbone", "huge"}}), UsageError);

  ExperimentConfig p;
  p.protocol = "9_9";
  CHECK_THROWS_AS(p.validate(), UsageError);
}

TEST_CASE("synth config round trips") {
  SynthConfig s;
  apply_overrides(s, {{"subjects_per_ethnicity", "7"}, {"static_replay", "false"}});
  CHECK(s.subjects_per_ethnicity == 7);
  CHECK_FALSE(s.static_replay);
  SynthConfig back;
  apply_overrides(back, to_key_values(s));
  CHECK(to_key_values(back) == to_key_values(s));
  CHECK_THROWS_AS(apply_overrides(s, {{"frames", "3"}}), UsageError);
}

TEST_CASE("git blob ids match git hash-object") {
  CHECK(git_blob_id("") == "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
  CHECK(git_blob_id("hello\n") == "ce013625030ba8dba906f756967f9e9ca394464a");
}

TEST_CASE("run record lists artifacts with their ids") {
  const auto dir = scratch_dir("record");
  const auto file = dir / "in.txt";
  std::ofstream(file) << "hello\n";
  RunRecord r;
  r.command = "train";
  r.argv = {"sdfas", "train"};
  r.seed = 7;
  r.set_config({{"epochs", "1"}});
  r.add_input("data", file);
  r.add_timing("total", 1.5);
  const auto path = record_path_for_dir(dir);
  r.save(path);
  std::ifstream is(path);
  const auto j = nlohmann::json::parse(is);
  CHECK(j["command"] == "train");
  CHECK(j["seed"] == 7);
  CHECK(j["config_hash"] == git_blob_id("epochs = 1\n"));
  CHECK(j["inputs"][0]["id"] == "ce013625030ba8dba906f756967f9e9ca394464a");
  CHECK(record_path_for_file("scores.csv").string() == "scores.csv.run.json");
}

TEST_CASE("pnm files round trip and load as a frame directory") {
  const auto dir = scratch_dir("pnm");
  Image8 rgb{3, 2, 3, {}};
  for (int i = 0; i < 18; ++i) rgb.pixels.push_back(static_cast<std::uint8_t>(i * 13));
  save_pnm(dir / "b.ppm", rgb);
  save_pnm(dir / "a.ppm", Image8{3, 2, 3, std::vector<std::uint8_t>(18, 9)});
  const auto t = load_pnm(dir / "b.ppm");
  REQUIRE(t.shape() == std::vector<std::size_t>{3, 2, 3});
  for (std::size_t i = 0; i < 18; ++i) CHECK(t.data()[i] == rgb.pixels[i]);

  const auto seq = load_frame_dir(dir);
  REQUIRE(seq.frames.size() == 2);
  CHECK(seq.modality == Modality::kColor);
  CHECK(seq.frames[0].data()[0] == 9.0);

  std::ofstream(dir / "bad.pgm", std::ios::binary) << "P5\n# c\n2 2\n255\nab";
  CHECK_THROWS_AS(load_pnm(dir / "bad.pgm"), DataError);
  CHECK_THROWS_AS(load_frame_dir(dir), DataError);
}

TEST_CASE("ablation plan over the fusion axis has three runs") {
  NetConfig base;
  const auto plan = ablation_plan(base, full_axes("variant"));
  REQUIRE(plan.size() == 3);
  CHECK(run_label(plan[0]) == "sd-rdi-nhf");
  CHECK(run_label(plan[2]) == "sd-rdi-psmm");
  CHECK(ablation_plan(base, full_axes("branches,modalities")).size() == 9);
  CHECK_THROWS_AS(full_axes("colour"), UsageError);

  std::vector<AblationResult> results(plan.size());
  for (std::size_t i = 0; i < plan.size(); ++i) results[i].net = plan[i];
  results[0].rates = Rates{0.1, 0.2, 0.15};
  results[1].error = "boom";
  const auto table = ablation_table(results);
  CHECK(std::count(table.begin(), table.end(), '\n') == 4);
  CHECK(table.find("15.0") != std::string::npos);
  CHECK(table.find("failed: boom") != std::string::npos);
}

TEST_CASE("self-test passes") {
  std::ostringstream log;
  const auto checks = run_selftest(&log);
  CHECK(checks.size() >= 6);
  for (const auto& c : checks) {
    INFO(c.name << ": " << c.detail);
    CHECK(c.passed);
  }
  CHECK(log.str().find("FAIL") == std::string::npos);
}
