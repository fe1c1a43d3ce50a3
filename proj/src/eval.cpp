#include "goalgen/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>

#include "goalgen/error.hpp"
#include "goalgen/kernels.hpp"

namespace goalgen {

void EvalReport::validate() const {
  if (sample_count != static_cast<int>(samples.size()))
    throw UsageError("report: sample_count disagrees with the score list");
  int successes = 0;
  for (const SampleScore& s : samples) {
    if (!(s.pce >= 0.0) || !std::isfinite(s.pce)) throw UsageError("report: PCE must be >= 0");
    if (has_predicate) {
      if (s.success != 0 && s.success != 1)
        throw UsageError("report: predicate configured but a score lacks success");
      successes += s.success;
    } else if (s.success != -1) {
      throw UsageError("report: success recorded without a predicate");
    }
  }
  if (has_predicate && successes != success_count)
    throw UsageError("report: success_count disagrees with the scores");
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw SizeError("percentile: empty sample");
  if (!(q >= 0.0 && q <= 1.0)) throw RangeError("percentile: q outside [0, 1]");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<size_t>(pos);
  if (lo + 1 >= values.size()) return values.back();
  const double frac = pos - static_cast<double>(lo);
  return values[lo] * (1.0 - frac) + values[lo + 1] * frac;
}

EvalReport evaluate_samples(const GoalSampler& sampler, const std::vector<TaskSample>& samples,
                            const EvalOptions& opts) {
  if (samples.empty()) throw UsageError("eval: empty split");
  const auto t0 = std::chrono::steady_clock::now();

  EvalReport report;
  report.task_id = samples.front().task_id;
  report.split = opts.split_name;
  report.seed = opts.seed;
  report.sample_count = static_cast<int>(samples.size());
  report.has_predicate = opts.predicate.has_value();

  std::vector<double> pces;
  pces.reserve(samples.size());
  for (size_t i = 0; i < samples.size(); ++i) {
    const TaskSample& sample = samples[i];
    const MatX3 generated = sampler(sample, substream(opts.seed, "eval", i));
    if (generated.rows() == 0) throw SizeError("eval: sampler returned an empty cloud");

    SampleScore score;
    score.index = static_cast<int>(i);
    score.pce = kernels::pce(generated, sample.goal_cloud.coords);
    if (opts.predicate) {
      // a prediction too degenerate for a rigid fit simply fails the check
      try {
        DiffusionSample wrapped;
        wrapped.final_cloud.coords = generated;
        PointCloud initial;
        initial.coords = sample.moving_object().world_points();
        const RobustFitResult fit =
            extract_goal_transform(initial, wrapped, opts.huber_delta);
        SceneObject moved = sample.moving_object();
        moved.pose = fit.transform * moved.pose;
        score.success = relation_holds(*opts.predicate, moved,
                                       sample.initial.by_id(opts.anchor_id), opts.relation)
                            ? 1
                            : 0;
      } catch (const NumericError&) {
        score.success = 0;
      }
      report.success_count += score.success;
    }
    pces.push_back(score.pce);
    report.samples.push_back(score);
  }

  report.pce_mean = 0.0;
  for (const double v : pces) report.pce_mean += v;
  report.pce_mean /= static_cast<double>(pces.size());
  report.pce_median = percentile(pces, 0.5);
  report.pce_p10 = percentile(pces, 0.1);
  report.pce_p90 = percentile(pces, 0.9);
  if (report.has_predicate)
    report.success_rate =
        static_cast<double>(report.success_count) / static_cast<double>(report.sample_count);

  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  report.validate();
  return report;
}

EvalReport evaluate_model(const NoisePredictor& model, const NoiseSchedule& schedule,
                          const std::vector<TaskSample>& samples, const EvalOptions& opts) {
  const GoalSampler sampler = [&](const TaskSample& sample, std::uint64_t seed) {
    const ConditionBundle cond = condition_from_sample(sample, model.config());
    return ddim_sample(model, cond, schedule, opts.ddim_steps, opts.eta, seed)
        .final_cloud.coords;
  };
  return evaluate_samples(sampler, samples, opts);
}

MatX3 mean_goal_cloud(const std::vector<TaskSample>& samples) {
  if (samples.empty()) throw SizeError("baseline: no samples");
  const Eigen::Index rows = samples.front().goal_cloud.coords.rows();
  MatX3 mean = MatX3::Zero(rows, 3);
  for (const TaskSample& s : samples) {
    if (s.goal_cloud.coords.rows() != rows)
      throw SizeMismatch("baseline: goal clouds differ in size");
    mean += s.goal_cloud.coords;
  }
  return mean / static_cast<double>(samples.size());
}

Json report_to_json(const EvalReport& report) {
  report.validate();
  Json rows = Json::array();
  for (const SampleScore& s : report.samples) {
    Json row{{"index", s.index}, {"pce", s.pce}};
    if (report.has_predicate) row["success"] = s.success;
    rows.push_back(std::move(row));
  }
  Json j{{"task_id", report.task_id}, {"split", report.split},
         {"seed", report.seed},       {"sample_count", report.sample_count},
         {"pce_mean", report.pce_mean}, {"pce_median", report.pce_median},
         {"pce_p10", report.pce_p10}, {"pce_p90", report.pce_p90},
         {"samples", std::move(rows)}};
  if (report.has_predicate) {
    j["success_count"] = report.success_count;
    j["success_rate"] = report.success_rate;
  }
  return j;
}

EvalReport report_from_json(const Json& j) {
  try {
    EvalReport report;
    report.task_id = j.at("task_id").get<std::string>();
    report.split = j.at("split").get<std::string>();
    report.seed = j.at("seed").get<std::uint64_t>();
    report.sample_count = j.at("sample_count").get<int>();
    report.pce_mean = j.at("pce_mean").get<double>();
    report.pce_median = j.at("pce_median").get<double>();
    report.pce_p10 = j.at("pce_p10").get<double>();
    report.pce_p90 = j.at("pce_p90").get<double>();
    report.has_predicate = j.contains("success_count");
    if (report.has_predicate) {
      report.success_count = j.at("success_count").get<int>();
      report.success_rate = j.at("success_rate").get<double>();
    }
    for (const Json& row : j.at("samples")) {
      SampleScore s;
      s.index = row.at("index").get<int>();
      s.pce = row.at("pce").get<double>();
      if (report.has_predicate) s.success = row.at("success").get<int>();
      report.samples.push_back(s);
    }
    report.validate();
    return report;
  } catch (const Json::exception& e) {
    throw DataError(std::string("report: malformed JSON: ") + e.what());
  }
}

void write_eval_files(const std::filesystem::path& dir, const EvalReport& report) {
  std::filesystem::create_directories(dir);
  write_json_file(dir / "report.json", report_to_json(report));

  std::ostringstream csv;
  csv << "index,pce,success\n";
  csv.precision(17);
  for (const SampleScore& s : report.samples)
    csv << s.index << ',' << s.pce << ',' << s.success << '\n';
  write_text_file(dir / "report_pce.csv", csv.str());

  write_json_file(dir / "report_meta.json", Json{{"wall_seconds", report.wall_seconds}});
}

}  // namespace goalgen
