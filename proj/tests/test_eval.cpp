#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <unistd.h>

#include "goalgen/error.hpp"
#include "goalgen/eval.hpp"
#include "goalgen/kernels.hpp"
#include "schema_check.hpp"

using namespace goalgen;

namespace {

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    auto base = std::filesystem::temp_directory_path() /
                ("eval_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter()++));
    std::filesystem::create_directories(base);
    path = base;
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  static int& counter() {
    static int c = 0;
    return c;
  }
};

// One small stacking dataset shared by the whole suite.
const std::vector<TaskSample>& toy_samples() {
  static const std::vector<TaskSample> samples = [] {
    static TempDir tmp;
    TaskSpec spec = builtin_task("toy_ontop");
    spec.points_per_object = 96;
    generate_dataset(spec, 10, 5, tmp.path);
    return load_samples(tmp.path / "manifest.jsonl");
  }();
  return samples;
}

GoalSampler perfect_sampler() {
  return [](const TaskSample& s, std::uint64_t) { return s.goal_cloud.coords; };
}

Json load_schema() {
  return read_json_file(std::filesystem::path(TEST_SOURCE_DIR) /
                        "schemas/eval_report.schema.json");
}

}  // namespace

TEST_CASE("percentile interpolates linearly between order statistics") {
  const std::vector<double> v{3.0, 1.0, 4.0, 2.0};  // sorted: 1 2 3 4
  CHECK(percentile(v, 0.5) == 2.5);
  CHECK(percentile(v, 0.0) == 1.0);
  CHECK(percentile(v, 1.0) == 4.0);
  CHECK(percentile(v, 0.1) == doctest::Approx(1.3).epsilon(1e-12));
  CHECK(percentile(v, 0.9) == doctest::Approx(3.7).epsilon(1e-12));
  CHECK(percentile({7.5}, 0.3) == 7.5);
  CHECK_THROWS_AS(percentile({}, 0.5), SizeError);
  CHECK_THROWS_AS(percentile(v, 1.5), RangeError);
  CHECK_THROWS_AS(percentile(v, -0.1), RangeError);
}

TEST_CASE("perfect sampler scores zero PCE and passes the stacking predicate") {
  const auto& samples = toy_samples();
  REQUIRE(samples.size() == 10);

  EvalOptions opts;
  opts.seed = 3;
  opts.split_name = "seen";
  opts.predicate = RelationKind::OnTop;
  const EvalReport report = evaluate_samples(perfect_sampler(), samples, opts);

  CHECK(report.task_id == "toy_ontop");
  CHECK(report.split == "seen");
  CHECK(report.sample_count == 10);
  CHECK(report.pce_mean == 0.0);
  CHECK(report.pce_median == 0.0);
  CHECK(report.pce_p90 == 0.0);
  CHECK(report.has_predicate);
  CHECK(report.success_count == 10);
  CHECK(report.success_rate == 1.0);
  for (const SampleScore& s : report.samples) {
    CHECK(s.pce == 0.0);
    CHECK(s.success == 1);
  }
  CHECK(report.wall_seconds >= 0.0);
}

TEST_CASE("a sampler that never moves the object fails the predicate") {
  const auto& samples = toy_samples();
  const GoalSampler initial_sampler = [](const TaskSample& s, std::uint64_t) {
    return s.moving_object().world_points();
  };
  EvalOptions opts;
  opts.predicate = RelationKind::OnTop;
  const EvalReport report = evaluate_samples(initial_sampler, samples, opts);
  CHECK(report.success_count == 0);
  CHECK(report.success_rate == 0.0);
  // the mover starts on the table, away from the anchor top
  CHECK(report.pce_mean > 0.01);
}

TEST_CASE("closed-form noise oracle drives the per-sample PCE below 1e-3") {
  const auto& samples = toy_samples();
  REQUIRE(samples.size() == 10);
  const NoiseSchedule schedule = make_schedule(100);

  const GoalSampler oracle = [&](const TaskSample& s, std::uint64_t seed) {
    const MatX3 x0 = s.goal_cloud.coords;
    const NoiseFn predict = [&](const MatX3& xt, int t) {
      const double ab = schedule.alpha_bar_at(t);
      return ((xt - std::sqrt(ab) * x0) / std::sqrt(1.0 - ab)).eval();
    };
    return ddim_sample(predict, static_cast<int>(x0.rows()), schedule, 25, 0.0, seed)
        .final_cloud.coords;
  };

  const EvalReport report = evaluate_samples(oracle, samples, {});
  CHECK(report.pce_mean < 1e-3);
  for (const SampleScore& s : report.samples) CHECK(s.pce < 1e-3);
  CHECK_FALSE(report.has_predicate);
  for (const SampleScore& s : report.samples) CHECK(s.success == -1);
}

TEST_CASE("model evaluation is deterministic in (inputs, seed)") {
  const auto& samples = toy_samples();
  PredictorConfig config;
  config.width = 24;
  config.name_dim = 16;
  config.instr_dim = 16;
  config.time_dim = 16;
  const NoisePredictor model(config, 77);
  const NoiseSchedule schedule = make_schedule(50);

  EvalOptions opts;
  opts.ddim_steps = 10;
  opts.seed = 123;
  const EvalReport a = evaluate_model(model, schedule, samples, opts);
  const EvalReport b = evaluate_model(model, schedule, samples, opts);
  CHECK(report_to_json(a).dump() == report_to_json(b).dump());

  opts.seed = 124;
  const EvalReport c = evaluate_model(model, schedule, samples, opts);
  CHECK(report_to_json(a).dump() != report_to_json(c).dump());
  CHECK(a.pce_mean != c.pce_mean);
}

TEST_CASE("mean goal cloud is the pointwise average") {
  const auto& samples = toy_samples();
  const MatX3 mean = mean_goal_cloud(samples);
  REQUIRE(mean.rows() == samples.front().goal_cloud.coords.rows());

  MatX3 expect = MatX3::Zero(mean.rows(), 3);
  for (const TaskSample& s : samples) expect += s.goal_cloud.coords;
  expect /= static_cast<double>(samples.size());
  CHECK((mean - expect).cwiseAbs().maxCoeff() == 0.0);

  // the average is a better guess than any single wrong-sample cloud on average
  double mean_pce = 0.0, cross_pce = 0.0;
  for (size_t i = 0; i < samples.size(); ++i) {
    mean_pce += kernels::pce(mean, samples[i].goal_cloud.coords);
    cross_pce += kernels::pce(samples[(i + 1) % samples.size()].goal_cloud.coords,
                              samples[i].goal_cloud.coords);
  }
  CHECK(mean_pce < cross_pce);

  CHECK_THROWS_AS(mean_goal_cloud({}), SizeError);
  std::vector<TaskSample> bad{samples[0], samples[1]};
  bad[1].goal_cloud.coords = samples[1].goal_cloud.coords.topRows(8);
  CHECK_THROWS_AS(mean_goal_cloud(bad), SizeMismatch);
}

TEST_CASE("report files: schema conformance, round-trip, determinism") {
  TempDir tmp;
  const auto& samples = toy_samples();
  EvalOptions opts;
  opts.seed = 9;
  opts.split_name = "unseen";
  opts.predicate = RelationKind::OnTop;
  EvalReport report = evaluate_samples(perfect_sampler(), samples, opts);
  report.wall_seconds = 1.25;

  write_eval_files(tmp.path, report);
  REQUIRE(std::filesystem::exists(tmp.path / "report.json"));
  REQUIRE(std::filesystem::exists(tmp.path / "report_pce.csv"));
  REQUIRE(std::filesystem::exists(tmp.path / "report_meta.json"));

  const Json loaded = read_json_file(tmp.path / "report.json");
  const Json schema = load_schema();
  const auto violation = schema_check::first_violation(schema, loaded);
  INFO(violation.value_or(""));
  CHECK_FALSE(violation.has_value());

  // wall clock lives in the sidecar only
  CHECK_FALSE(loaded.contains("wall_seconds"));
  CHECK(read_json_file(tmp.path / "report_meta.json").at("wall_seconds").get<double>() == 1.25);

  const EvalReport back = report_from_json(loaded);
  CHECK(back.task_id == report.task_id);
  CHECK(back.seed == report.seed);
  CHECK(back.sample_count == report.sample_count);
  CHECK(back.pce_mean == report.pce_mean);
  CHECK(back.success_count == report.success_count);
  REQUIRE(back.samples.size() == report.samples.size());
  for (size_t i = 0; i < back.samples.size(); ++i) {
    CHECK(back.samples[i].pce == report.samples[i].pce);
    CHECK(back.samples[i].success == report.samples[i].success);
  }

  // rewriting produces identical bytes for report.json
  TempDir tmp2;
  write_eval_files(tmp2.path, report);
  std::ifstream f1(tmp.path / "report.json"), f2(tmp2.path / "report.json");
  const std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  const std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  CHECK(s1 == s2);

  // CSV: header + one row per sample
  std::ifstream csv(tmp.path / "report_pce.csv");
  std::string line;
  std::getline(csv, line);
  CHECK(line == "index,pce,success");
  int rows = 0;
  while (std::getline(csv, line))
    if (!line.empty()) rows++;
  CHECK(rows == report.sample_count);
}

TEST_CASE("schema checker and report validation reject malformed reports") {
  const Json schema = load_schema();
  const auto& samples = toy_samples();
  const EvalReport report = evaluate_samples(perfect_sampler(), samples, {});

  Json j = report_to_json(report);
  CHECK_FALSE(schema_check::first_violation(schema, j).has_value());

  Json missing = j;
  missing.erase("pce_mean");
  CHECK(schema_check::first_violation(schema, missing).has_value());

  Json extra = j;
  extra["surprise"] = 1;
  CHECK(schema_check::first_violation(schema, extra).has_value());

  Json negative = j;
  negative["pce_mean"] = -0.5;
  CHECK(schema_check::first_violation(schema, negative).has_value());

  Json wrong_type = j;
  wrong_type["sample_count"] = "ten";
  CHECK(schema_check::first_violation(schema, wrong_type).has_value());
  CHECK_THROWS_AS(report_from_json(wrong_type), DataError);

  EvalReport broken = report;
  broken.samples[0].pce = -1.0;
  CHECK_THROWS_AS(broken.validate(), UsageError);
  broken = report;
  broken.sample_count += 1;
  CHECK_THROWS_AS(broken.validate(), UsageError);
  broken = report;
  broken.samples[0].success = 1;  // success without a predicate
  CHECK_THROWS_AS(broken.validate(), UsageError);

  CHECK_THROWS_AS(evaluate_samples(perfect_sampler(), {}, {}), UsageError);
}
