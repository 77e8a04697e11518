#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "lpa/eval.hpp"
#include "lpa/samplers.hpp"
#include "lpa/synthroom.hpp"
#include "lpa/trainer.hpp"

namespace acc {

/// One acceptance criterion outcome; the runner prints exactly one line per
/// criterion.
struct Outcome {
  std::string name;
  bool pass = false;
  std::string detail;
  double seconds = 0;
};

class Reporter {
 public:
  void run(const std::string& name, const std::function<bool(std::string&)>& body);
  int finish() const;  // prints the summary, returns the failure count

 private:
  std::vector<Outcome> results_;
};

/// Persistent working directory so expensive artifacts survive re-runs.
std::string work_dir();

/// Desk-scale experiment configuration shared by criteria 5-8.
lpa::Config experiment_config();
lpa::SynthConfig experiment_priors();

/// 10k-image photographer-prior dataset (cached on disk).
std::string experiment_dataset();
/// Small labeled pool + held-out eval set for the classifier study (cached).
std::string classifier_dataset();
std::string classifier_eval_dataset();

/// Segmenter pretrained on oracle masks plus top-down views (cached).
std::shared_ptr<lpa::Segmenter> experiment_segmenter();

struct RunSummary {
  std::string run_dir;
  double yaw_mae_epoch0 = 0;
  double yaw_mae_final = 0;
  double anchor_acc_final = 0;
  double per_anchor_yaw_spread = 0;
  double abnormality_rate = 0;
  std::uint64_t gen_hash = 0;
};

/// Joint training run with on-disk caching: when RESULT.json exists for the
/// same config fingerprint, the stored summary is reused.
RunSummary run_experiment(const lpa::Config& cfg, const std::string& tag);

double median3(double a, double b, double c);

void run_fast_criteria(Reporter& rep);
void run_experiment_criteria(Reporter& rep);

}  // namespace acc
