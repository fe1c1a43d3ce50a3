#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "goalgen/dataset.hpp"
#include "goalgen/diffusion.hpp"

namespace goalgen {

// Produces a predicted goal cloud for one sample; seed individualizes draws.
using GoalSampler = std::function<MatX3(const TaskSample&, std::uint64_t)>;

struct EvalOptions {
  int ddim_steps = 25;
  double eta = 0.0;
  std::uint64_t seed = 0;
  double huber_delta = 0.01;
  // When set, success = relation_holds(mover at the extracted goal pose,
  // anchor object) — the automatic correctness check.
  std::optional<RelationKind> predicate;
  std::string anchor_id = "anchor";
  RelationParams relation;
  std::string split_name = "all";
};

struct SampleScore {
  int index = 0;     // position in the evaluated list
  double pce = 0.0;  // generated cloud -> stored goal cloud
  int success = -1;  // -1 without a predicate, else 0/1
};

struct EvalReport {
  std::string task_id;
  std::string split;
  std::uint64_t seed = 0;
  int sample_count = 0;
  double pce_mean = 0.0, pce_median = 0.0, pce_p10 = 0.0, pce_p90 = 0.0;
  bool has_predicate = false;
  int success_count = 0;
  double success_rate = 0.0;
  double wall_seconds = 0.0;  // meta sidecar only, never in report.json
  std::vector<SampleScore> samples;

  void validate() const;  // counts consistent, PCE finite and >= 0
};

// Linear-interpolation percentile at q in [0, 1] (median = 0.5).
double percentile(std::vector<double> values, double q);

// Scores every sample with the given sampler; the per-sample stream is
// substream(opts.seed, "eval", index). UsageError on an empty list.
EvalReport evaluate_samples(const GoalSampler& sampler, const std::vector<TaskSample>& samples,
                            const EvalOptions& opts);

// DDIM sampling from a trained predictor, then the same scoring.
EvalReport evaluate_model(const NoisePredictor& model, const NoiseSchedule& schedule,
                          const std::vector<TaskSample>& samples, const EvalOptions& opts);

// Pointwise mean of the goal clouds (equal row counts required): the trivial
// predictor a trained model has to beat.
MatX3 mean_goal_cloud(const std::vector<TaskSample>& samples);

Json report_to_json(const EvalReport& report);  // deterministic, no wall clock
EvalReport report_from_json(const Json& j);

// report.json + report_pce.csv (index,pce,success rows; success -1 when no
// predicate) + report_meta.json (wall clock — excluded from determinism
// comparisons).
void write_eval_files(const std::filesystem::path& dir, const EvalReport& report);

}  // namespace goalgen
