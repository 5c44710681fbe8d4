#include <gtest/gtest.h>
#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "hymarl/gradcheck.hpp"
#include "hymarl/plot.hpp"
#include "hymarl/train.hpp"

using namespace hymarl;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  static std::atomic<int> counter{0};
  const fs::path p = fs::temp_directory_path() /
                     ("hymarl_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++) + "_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

TrainConfig tiny_config(const std::string& algo, const std::string& env = "hybrid_climb") {
  TrainConfig c;
  c.algo = algo;
  c.env = env;
  c.seed = 11;
  c.total_steps = 100;
  c.batch_size = 8;
  c.buffer_capacity = 200;
  c.learning_starts = 20;
  c.eval_period = 50;
  c.eval_episodes = 3;
  c.final_eval_episodes = 5;
  c.model.hidden = {8, 8};
  c.model.mix_width = 4;
  return c;
}

std::vector<nlohmann::json> read_records(const fs::path& p) {
  std::vector<nlohmann::json> out;
  std::ifstream in(p);
  for (std::string line; std::getline(in, line);) out.push_back(nlohmann::json::parse(line));
  return out;
}

/// Always plays the reward vertex of hybrid_climb.
class VertexPolicy final : public Learner {
 public:
  std::string algo() const override { return "vertex"; }
  int num_agents() const override { return 2; }
  HybridAction select_agent(int i, std::span<const double>, const ActParams&, Rng&, NoiseState&) override {
    return {HybridClimb::kActionB, {i == 0 ? 0.6 : -0.4}};
  }
  LossMap update(const JointBatch&) override { return {}; }
  void sync_targets(double) override {}
  std::vector<std::pair<std::string, Mlp*>> named_nets() override { return {}; }
};

/// Records what every agent was shown and plays Tag.
class SpyPolicy final : public Learner {
 public:
  std::string algo() const override { return "spy"; }
  int num_agents() const override { return 2; }
  HybridAction select_agent(int i, std::span<const double> obs, const ActParams&, Rng&, NoiseState&) override {
    seen.push_back({i, std::vector<double>(obs.begin(), obs.end())});
    return {CatchTarget::kTag, {}};
  }
  LossMap update(const JointBatch&) override { return {}; }
  void sync_targets(double) override {}
  std::vector<std::pair<std::string, Mlp*>> named_nets() override { return {}; }
  std::vector<std::pair<int, std::vector<double>>> seen;
};

/// Forwards to catch_target and logs each observation it hands out.
class RecordingEnv final : public Env {
 public:
  const EnvSpec& spec() const override { return inner.spec(); }
  TimeStep reset(std::uint64_t seed) override {
    TimeStep ts = inner.reset(seed);
    log(ts.obs);
    return ts;
  }
  StepResult step(const std::vector<HybridAction>& joint) override {
    StepResult r = inner.step(joint);
    if (!r.done) log(r.obs);
    return r;
  }
  bool episode_success() const override { return inner.episode_success(); }
  CatchTarget inner;
  std::vector<std::pair<int, std::vector<double>>> emitted;

 private:
  void log(const std::vector<std::vector<double>>& obs) {
    for (int i = 0; i < 2; ++i) emitted.push_back({i, obs[static_cast<std::size_t>(i)]});
  }
};

ModelConfig tiny_model() {
  ModelConfig cfg;
  cfg.hidden = {8, 8};
  cfg.mix_width = 4;
  return cfg;
}

std::unique_ptr<Learner> trained_learner(const std::string& algo, const EnvSpec& spec, std::uint64_t seed) {
  Rng rng(seed);
  auto l = make_learner(algo, spec, tiny_model(), rng);
  for (int u = 0; u < 5; ++u) {
    l->update(make_batch(random_transitions(spec, 8, rng), spec));
    l->sync_targets(0.5);
  }
  return l;
}

}  // namespace

// --- config -----------------------------------------------------------------

TEST(ConfigTest, ParsesKeysCommentsAndEnvOverrides) {
  const auto c = parse_config(
      "# comment\n"
      "algo = mahhqn\n"
      "train.gamma = 0.9   # trailing\n"
      "\n"
      "net.hidden = 16, 8\n"
      "explore.noise = ou\n"
      "env.target1 = 0.25\n");
  EXPECT_EQ(c.algo, "mahhqn");
  EXPECT_DOUBLE_EQ(c.model.gamma, 0.9);
  EXPECT_EQ(c.model.hidden, (std::vector<int>{16, 8}));
  EXPECT_EQ(c.noise, NoiseKind::ornstein_uhlenbeck);
  EXPECT_DOUBLE_EQ(c.env_params.at("target1"), 0.25);
}

TEST(ConfigTest, UnknownKeyRejectedWithLineNumber) {
  try {
    parse_config("algo = mapqn\n\ntrain.gama = 0.9\n", {}, "run.cfg");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("run.cfg:3:"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("train.gama"), std::string::npos);
  }
  EXPECT_THROW(parse_config("train.gamma 0.9\n"), ConfigError);
  EXPECT_THROW(parse_config("train.batch_size = many\n"), ConfigError);
}

TEST(ConfigTest, ValidationRejectsBadValues) {
  TrainConfig c;
  c.model.gamma = 1.5;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.algo = "dqn";
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  EXPECT_NO_THROW(c.validate());
}

TEST(ConfigTest, TextRoundTrip) {
  TrainConfig c = tiny_config("mahhqn");
  c.env_params["target2"] = -0.3;
  c.tau = 0.125;
  const TrainConfig back = parse_config(c.to_text());
  EXPECT_EQ(back.to_pairs(), c.to_pairs());
}

TEST(ConfigTest, IndependentAliasAndDefaults) {
  EXPECT_EQ(parse_config("algo = pdqn-independent\n").algo, "pdqn");
  const TrainConfig d;
  EXPECT_EQ(d.model.hidden, (std::vector<int>{64, 64}));
  EXPECT_EQ(d.model.mix_width, 32);
  EXPECT_DOUBLE_EQ(d.model.gamma, 0.95);
  EXPECT_EQ(d.batch_size, 64);
  EXPECT_EQ(d.buffer_capacity, 50000);
  EXPECT_DOUBLE_EQ(d.model.lr_value, 1e-3);
  EXPECT_DOUBLE_EQ(d.model.lr_policy, 1e-4);
  EXPECT_DOUBLE_EQ(d.tau, 0.01);
}

TEST(ConfigTest, WarmupDefaultsToTenPercentOfUpdates) {
  TrainConfig c;
  c.algo = "mahhqn";
  c.total_steps = 2000;
  c.learning_starts = 0;
  EXPECT_EQ(c.resolved_warmup(), 200);
  c.warmup_updates = 7;
  EXPECT_EQ(c.resolved_model().warmup_updates, 7);
  c.algo = "mapqn";
  EXPECT_EQ(c.resolved_warmup(), 0);
}

// --- training loop ----------------------------------------------------------

TEST(TrainTest, SmokeRunWritesRecords) {
  for (const std::string algo : {"pdqn", "mapqn", "mahhqn"}) {
    const auto dir = scratch("smoke_" + algo);
    const auto res = run_train(tiny_config(algo), dir);
    const auto recs = read_records(res.metrics_path);
    ASSERT_GE(recs.size(), 1u) << algo;
    EXPECT_EQ(res.records, static_cast<int>(recs.size()));
    long prev = 0;
    for (const auto& r : recs) {
      for (const char* k : {"step", "episode", "mean_return", "success_rate", "losses", "epsilon", "sigma"}) {
        EXPECT_TRUE(r.contains(k)) << algo << " missing " << k;
      }
      EXPECT_GE(r["step"].get<long>(), prev);
      prev = r["step"].get<long>();
    }
    EXPECT_TRUE(recs.back().value("final", false));
    EXPECT_TRUE(fs::exists(res.checkpoint_path));
    EXPECT_TRUE(fs::exists(dir / "config.txt"));
    EXPECT_GT(res.updates, 0);
  }
}

TEST(TrainTest, OneRecordPerEvalPeriod) {
  const auto res = run_train(tiny_config("mapqn"), scratch("period"));
  const auto recs = read_records(res.metrics_path);
  ASSERT_EQ(recs.size(), 3u);
  EXPECT_EQ(recs[0]["step"], 50);
  EXPECT_EQ(recs[1]["step"], 100);
  EXPECT_FALSE(recs[1].contains("final"));
}

TEST(TrainTest, SameSeedGivesByteIdenticalMetrics) {
  for (const std::string algo : {"pdqn", "mapqn", "mahhqn"}) {
    TrainConfig c = tiny_config(algo, "catch_target");
    c.total_steps = 150;
    const auto a = run_train(c, scratch("det_a"));
    const auto b = run_train(c, scratch("det_b"));
    EXPECT_TRUE(slurp(a.metrics_path) == slurp(b.metrics_path)) << algo << " metrics differ";
    EXPECT_TRUE(slurp(a.checkpoint_path) == slurp(b.checkpoint_path)) << algo << " checkpoints differ";
  }
}

TEST(TrainTest, DifferentSeedsDiffer) {
  TrainConfig c = tiny_config("mapqn", "catch_target");
  const auto a = run_train(c, scratch("seed_a"));
  c.seed = 12;
  const auto b = run_train(c, scratch("seed_b"));
  EXPECT_FALSE(slurp(a.checkpoint_path) == slurp(b.checkpoint_path));
}

TEST(TrainTest, InvalidConfigRefusedBeforeRunning) {
  TrainConfig c = tiny_config("mapqn");
  c.model.gamma = -0.1;
  const auto dir = scratch("invalid");
  EXPECT_THROW(run_train(c, dir), ConfigError);
  EXPECT_FALSE(fs::exists(dir / "metrics.jsonl"));
}

TEST(TrainTest, DivergentLossAbortsWithStepIndex) {
  TrainConfig c = tiny_config("mapqn");
  c.model.lr_value = 1e200;
  c.model.lr_mixing = 1e200;
  try {
    run_train(c, scratch("nan"));
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_EQ(std::string(e.what()).rfind("step ", 0), 0u) << e.what();
  }
}

TEST(TrainTest, UpdateHookSeesEveryUpdate) {
  long calls = 0, last = 0;
  const auto res = run_train(tiny_config("pdqn"), scratch("hook"), nullptr, [&](long u, Learner&) {
    ++calls;
    EXPECT_EQ(u, last + 1);
    last = u;
  });
  EXPECT_EQ(calls, res.updates);
  EXPECT_EQ(res.updates, 80);
}

TEST(TrainTest, MahhqnWarmupHoldsHighLevelInsideTrainingLoop) {
  TrainConfig c = tiny_config("mahhqn");
  c.warmup_updates = 30;
  std::vector<std::uint64_t> hashes;
  run_train(c, scratch("warm"), nullptr,
            [&](long, Learner& l) { hashes.push_back(dynamic_cast<Mahhqn&>(l).high_level_hash()); });
  ASSERT_GT(hashes.size(), 31u);
  for (std::size_t u = 1; u < 30; ++u) EXPECT_EQ(hashes[u], hashes[0]) << "update " << u + 1;
  EXPECT_NE(hashes[30], hashes[29]);
}

// --- evaluation and checkpoints ---------------------------------------------

TEST(EvalTest, VertexPolicyScoresOracleOptimum) {
  VertexPolicy p;
  HybridClimb env;
  const auto r = evaluate(p, env, 10, 3);
  EXPECT_DOUBLE_EQ(r.mean_return, 1.0);
  EXPECT_DOUBLE_EQ(r.success_rate, 1.0);
  EXPECT_EQ(r.episodes, 10);
}

TEST(EvalTest, EachAgentSeesOnlyItsOwnObservation) {
  SpyPolicy spy;
  RecordingEnv env;
  evaluate(spy, env, 4, 9);
  ASSERT_FALSE(spy.seen.empty());
  EXPECT_EQ(spy.seen, env.emitted);
  for (const auto& [i, obs] : spy.seen) EXPECT_EQ(obs.size(), 6u);
}

TEST(EvalTest, PolicyPassesPerSelection) {
  CatchTarget env;
  const auto& spec = env.spec();
  for (const std::string algo : {"mapqn", "mahhqn"}) {
    auto l = trained_learner(algo, spec, 4);
    l->stats().clear();
    const auto r = evaluate(*l, env, 2, 1);
    const auto& s = l->stats();
    ASSERT_GT(s.selections, 0u);
    EXPECT_EQ(s.selections % 2, 0u);
    const std::uint64_t joint = s.selections / 2;
    if (algo == "mapqn") {
      EXPECT_EQ(s.param_blocks, joint * 2 * 2) << "N*K blocks per joint selection";
    } else {
      EXPECT_EQ(s.param_blocks, joint * 2) << "N blocks per joint selection";
    }
    EXPECT_EQ(r.episodes, 2);
  }
}

TEST(CheckpointTest, RoundTripReproducesGreedyActionsBitExactly) {
  CatchTarget env;
  const auto& spec = env.spec();
  for (const std::string algo : {"pdqn", "mapqn", "mahhqn"}) {
    auto l = trained_learner(algo, spec, 21);
    const auto path = (scratch("ck_" + algo) / "model.ckpt").string();
    save_checkpoint(path, *l, {algo, spec, tiny_model(), {}});
    auto loaded = load_checkpoint(path, spec);
    EXPECT_EQ(loaded.algo(), algo);
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Rng r1(0), r2(0);
    NoiseState n1, n2;
    for (int t = 0; t < 100; ++t) {
      for (int i = 0; i < 2; ++i) {
        std::vector<double> obs(6);
        for (double& v : obs) v = u(rng);
        const auto a = l->select_agent(i, obs, ActParams::greedy(), r1, n1);
        const auto b = loaded.learner->select_agent(i, obs, ActParams::greedy(), r2, n2);
        EXPECT_EQ(a.k, b.k);
        EXPECT_EQ(a.x, b.x);
      }
    }
    // Optimizer state travels too.
    auto live = l->named_nets();
    auto back = loaded.learner->named_nets();
    ASSERT_EQ(live.size(), back.size());
    for (std::size_t n = 0; n < live.size(); ++n) {
      EXPECT_EQ(live[n].first, back[n].first);
      EXPECT_EQ(live[n].second->params().values(), back[n].second->params().values());
      EXPECT_EQ(live[n].second->opt().m, back[n].second->opt().m);
      EXPECT_EQ(live[n].second->opt().v, back[n].second->opt().v);
      EXPECT_EQ(live[n].second->opt().step, back[n].second->opt().step);
    }
  }
}

TEST(CheckpointTest, MahhqnUpdateCountSurvives) {
  CatchTarget env;
  auto l = trained_learner("mahhqn", env.spec(), 2);
  const auto path = (scratch("ck_updates") / "m.ckpt").string();
  save_checkpoint(path, *l, {"mahhqn", env.spec(), tiny_model(), {}});
  auto back = load_checkpoint(path, env.spec());
  EXPECT_EQ(dynamic_cast<Mahhqn&>(*back.learner).updates(), 5);
}

TEST(CheckpointTest, EvalTwiceGivesIdenticalResults) {
  TrainConfig c = tiny_config("mahhqn", "catch_target");
  const auto res = run_train(c, scratch("eval_twice"));
  const auto a = run_eval(res.checkpoint_path.string(), "catch_target", {}, 5, 3);
  const auto b = run_eval(res.checkpoint_path.string(), "catch_target", {}, 5, 3);
  EXPECT_EQ(a.mean_return, b.mean_return);
  EXPECT_EQ(a.success_rate, b.success_rate);
  EXPECT_EQ(a.episodes, 5);
  // Same episodes as the final evaluation inside training.
  const auto f = run_eval(res.checkpoint_path.string(), "catch_target", {}, c.final_eval_episodes, mix_seed(c.seed, 4));
  EXPECT_EQ(f.mean_return, res.final_eval.mean_return);
  EXPECT_EQ(f.success_rate, res.final_eval.success_rate);
}

TEST(CheckpointTest, MismatchedEnvironmentRefused) {
  const auto res = run_train(tiny_config("mapqn"), scratch("mismatch"));
  const auto path = res.checkpoint_path.string();
  EXPECT_THROW(run_eval(path, "catch_target", {}, 2, 0), CheckpointError);
  try {
    run_eval(path, "hybrid_climb", {{"target1", 0.1}}, 2, 0);
    FAIL() << "expected CheckpointError";
  } catch (const CheckpointError& e) {
    EXPECT_NE(std::string(e.what()).find("incompatible"), std::string::npos) << e.what();
  }
  EXPECT_NO_THROW(run_eval(path, "hybrid_climb", {}, 2, 0));
}

TEST(CheckpointTest, RecordsEnvironmentOverrides) {
  TrainConfig c = tiny_config("pdqn");
  c.env_params["target1"] = 0.2;
  const auto res = run_train(c, scratch("overrides"));
  const auto params = checkpoint_env_params(res.checkpoint_path.string());
  EXPECT_DOUBLE_EQ(params.at("target1"), 0.2);
  EXPECT_NO_THROW(run_eval(res.checkpoint_path.string(), "hybrid_climb", params, 2, 0));
}

TEST(CheckpointTest, CorruptFilesRejected) {
  const auto res = run_train(tiny_config("pdqn"), scratch("corrupt"));
  const std::string bytes = slurp(res.checkpoint_path);
  const auto dir = scratch("corrupt_out");
  const HybridClimb env;
  auto write = [&](const std::string& name, const std::string& data) {
    const auto p = (dir / name).string();
    std::ofstream(p, std::ios::binary) << data;
    return p;
  };
  EXPECT_THROW(load_checkpoint(write("short", bytes.substr(0, bytes.size() - 4)), env.spec()), CheckpointError);
  EXPECT_THROW(load_checkpoint(write("long", bytes + "x"), env.spec()), CheckpointError);
  EXPECT_THROW(load_checkpoint(write("magic", "NOTACKPT" + bytes.substr(8)), env.spec()), CheckpointError);
  EXPECT_THROW(load_checkpoint((dir / "missing").string(), env.spec()), CheckpointError);
  std::string bumped = bytes;
  bumped[8] = 9;
  EXPECT_THROW(load_checkpoint(write("version", bumped), env.spec()), CheckpointError);
}

// --- gradient report --------------------------------------------------------

TEST(GradcheckTest, CoversSevenLossesAndAllPass) {
  const auto rep = run_gradcheck();
  std::set<std::string> names;
  for (const auto& e : rep.entries) {
    names.insert(e.name);
    EXPECT_TRUE(e.report.passed) << e.name << " " << e.report.max_rel_error;
    EXPECT_LT(e.report.max_rel_error, 1e-4) << e.name;
  }
  EXPECT_EQ(names.size(), 7u);
  const auto expected = gradcheck_loss_names();
  EXPECT_EQ(names, std::set<std::string>(expected.begin(), expected.end()));
  EXPECT_TRUE(rep.all_passed());
}

TEST(GradcheckTest, PlantedSignFlipNamesTheLoss) {
  for (const auto& target : gradcheck_loss_names()) {
    GradcheckOptions opt;
    opt.inject_fault = target;
    const auto rep = run_gradcheck(opt);
    EXPECT_FALSE(rep.all_passed()) << target;
    for (const auto& e : rep.entries) EXPECT_EQ(e.report.passed, e.name != target) << target << " vs " << e.name;
  }
}

// --- plots ------------------------------------------------------------------

TEST(PlotTest, ThreeFilesGiveThreeCurvesWithLegend) {
  const auto dir = scratch("plot");
  std::vector<std::string> files;
  for (const std::string algo : {"pdqn", "mapqn", "mahhqn"}) {
    TrainConfig c = tiny_config(algo);
    c.eval_period = 25;
    files.push_back(run_train(c, dir / algo).metrics_path.string());
  }
  const auto svg = (dir / "curves.svg").string();
  const auto s = plot_metrics(files, svg);
  EXPECT_EQ(s.curves, 3);
  const std::string text = slurp(svg);
  std::size_t polylines = 0;
  for (auto p = text.find("class=\"curve\""); p != std::string::npos; p = text.find("class=\"curve\"", p + 1)) {
    ++polylines;
  }
  EXPECT_EQ(polylines, 6u) << "one polyline per file in each of the two panels";
  for (const auto& f : files) EXPECT_NE(text.find(f), std::string::npos);
  EXPECT_NE(text.find("success rate"), std::string::npos);
  EXPECT_NE(text.find("mean return"), std::string::npos);
}

TEST(PlotTest, AxisRangesCoverData) {
  const auto dir = scratch("plot_ranges");
  {
    std::ofstream(dir / "a.jsonl") << R"({"step":10,"mean_return":-2.5,"success_rate":0.0})" << "\n"
                                   << R"({"step":20,"mean_return":1.5,"success_rate":0.5})" << "\n"
                                   << R"({"step":20,"mean_return":99,"success_rate":1,"final":true})" << "\n";
    std::ofstream(dir / "b.jsonl") << R"({"step":5,"mean_return":0.0,"success_rate":0.25})" << "\n\n"
                                   << R"({"step":40,"mean_return":3.0,"success_rate":0.75})" << "\n";
  }
  const auto s = plot_metrics({(dir / "a.jsonl").string(), (dir / "b.jsonl").string()}, (dir / "o.svg").string());
  EXPECT_DOUBLE_EQ(s.step_min, 5);
  EXPECT_DOUBLE_EQ(s.step_max, 40);
  EXPECT_DOUBLE_EQ(s.return_min, -2.5);
  EXPECT_DOUBLE_EQ(s.return_max, 3.0);
  EXPECT_DOUBLE_EQ(s.success_min, 0.0);
  EXPECT_DOUBLE_EQ(s.success_max, 0.75);
}

TEST(PlotTest, EmptyOrCorruptMetricsGiveLineNumbers) {
  const auto dir = scratch("plot_bad");
  std::ofstream(dir / "empty.jsonl").close();
  try {
    read_curve((dir / "empty.jsonl").string());
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line, 1u);
  }
  std::ofstream(dir / "bad.jsonl") << R"({"step":1,"mean_return":0,"success_rate":0})" << "\n{oops\n";
  try {
    read_curve((dir / "bad.jsonl").string());
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line, 2u);
    EXPECT_NE(std::string(e.what()).find("bad.jsonl:2"), std::string::npos) << e.what();
  }
  std::ofstream(dir / "field.jsonl") << R"({"step":1,"success_rate":0})" << "\n";
  try {
    read_curve((dir / "field.jsonl").string());
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line, 1u);
    EXPECT_NE(std::string(e.what()).find("mean_return"), std::string::npos);
  }
}
