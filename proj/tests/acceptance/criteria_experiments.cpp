#include "harness.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <thread>

#include <json.hpp>

namespace acc {

using namespace lpa;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct ExperimentSet {
  std::array<RunSummary, 3> balanced;
  std::array<RunSummary, 3> unbalanced;
  std::array<RunSummary, 3> anchor_free;
};

// The nine joint-training runs behind criteria 5, 7 and 8. Two run at a time
// (one thread each); results are cached on disk so reruns are cheap.
const ExperimentSet& all_runs() {
  static ExperimentSet set = [] {
    experiment_dataset();
    experiment_segmenter();

    struct Job {
      Config cfg;
      std::string tag;
      RunSummary* out;
    };
    ExperimentSet s;
    std::vector<Job> jobs;
    const std::array<std::uint64_t, 3> seeds = {11, 12, 13};
    for (int i = 0; i < 3; ++i) {
      Config cfg = experiment_config();
      cfg.train.seed = seeds[(std::size_t)i];
      jobs.push_back({cfg, "default_s" + std::to_string(seeds[(std::size_t)i]),
                      &s.balanced[(std::size_t)i]});

      Config raw = cfg;
      raw.train.balance = false;
      jobs.push_back({raw, "nobalance_s" + std::to_string(seeds[(std::size_t)i]),
                      &s.unbalanced[(std::size_t)i]});

      // The anchor-free ablation also trains on the original (unbalanced)
      // data, matching the paper's configuration table.
      Config af = cfg;
      af.train.anchor_free = true;
      af.train.balance = false;
      jobs.push_back({af, "anchorfree_s" + std::to_string(seeds[(std::size_t)i]),
                      &s.anchor_free[(std::size_t)i]});
    }

    std::atomic<std::size_t> next{0};
    auto worker = [&] {
      while (true) {
        const std::size_t j = next.fetch_add(1);
        if (j >= jobs.size()) break;
        *jobs[j].out = run_experiment(jobs[j].cfg, jobs[j].tag);
      }
    };
    std::thread t1(worker), t2(worker);
    t1.join();
    t2.join();
    return s;
  }();
  return set;
}

bool criterion_camera_trend(std::string& detail) {
  const ExperimentSet& runs = all_runs();
  const double mae0 = median3(runs.balanced[0].yaw_mae_epoch0, runs.balanced[1].yaw_mae_epoch0,
                              runs.balanced[2].yaw_mae_epoch0);
  const double mae = median3(runs.balanced[0].yaw_mae_final, runs.balanced[1].yaw_mae_final,
                             runs.balanced[2].yaw_mae_final);
  const double acc = median3(runs.balanced[0].anchor_acc_final,
                             runs.balanced[1].anchor_acc_final,
                             runs.balanced[2].anchor_acc_final);
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "3-seed median yaw MAE %.1f deg (epoch 0: %.1f), anchor accuracy %.3f",
                mae, mae0, acc);
  detail = buf;
  return mae < 0.5 * mae0 && mae < 25.0 && acc > 0.70;
}

bool criterion_anchor_classifier(std::string& detail) {
  const std::string result_path = work_dir() + "/classifier_results.json";
  const Config cfg = experiment_config();
  const std::uint64_t key = cfg.fingerprint() ^ 0xc1a551f1e5ull;

  std::array<std::array<double, 3>, 3> acc{};  // [size_idx][seed]
  const std::array<int, 3> sizes = {500, 1000, 2000};
  bool cached = false;
  if (fs::exists(result_path)) {
    std::ifstream f(result_path);
    json j;
    f >> j;
    if (j.value("key", std::uint64_t(0)) == key) {
      for (int si = 0; si < 3; ++si) {
        for (int sd = 0; sd < 3; ++sd) {
          acc[(std::size_t)si][(std::size_t)sd] = j["accuracy"][(std::size_t)si][(std::size_t)sd];
        }
      }
      cached = true;
    }
  }

  if (!cached) {
    const Dataset train_ds = load_dataset(classifier_dataset());
    const Dataset eval_ds = load_dataset(classifier_eval_dataset());
    const auto seg = experiment_segmenter();
    for (int si = 0; si < 3; ++si) {
      for (int sd = 0; sd < 3; ++sd) {
        Rng rng(9000 + (std::uint64_t)sd * 131 + (std::uint64_t)si);
        AnchorClassifier cls(cfg.net, rng);
        cls.init_backbone_from(*seg, true);
        // a seed-dependent slice of the label pool
        std::vector<const DatasetRecord*> recs;
        const std::size_t offset = (std::size_t)sd * 130;
        for (std::size_t i = offset; i < train_ds.records.size() &&
                                     (int)recs.size() < sizes[(std::size_t)si]; ++i) {
          recs.push_back(&train_ds.records[i]);
        }
        SupervisedTrainOptions opt;
        opt.epochs = 10;
        opt.batch = 24;
        opt.holdout_frac = 0.05;
        train_anchor_classifier(cls, recs, opt, rng);
        int correct = 0;
        for (const auto& r : eval_ds.records) {
          if (cls.classify(r.image.to_image()) == r.anchor_label) ++correct;
        }
        acc[(std::size_t)si][(std::size_t)sd] =
            (double)correct / (double)eval_ds.records.size();
        std::printf("[harness] classifier %d labels seed %d: accuracy %.4f\n",
                    sizes[(std::size_t)si], sd, acc[(std::size_t)si][(std::size_t)sd]);
        std::fflush(stdout);
      }
    }
    json j;
    j["key"] = key;
    j["accuracy"] = acc;
    std::ofstream(result_path) << j.dump(2) << "\n";
  }

  std::array<double, 3> mean{};
  for (int si = 0; si < 3; ++si) {
    for (int sd = 0; sd < 3; ++sd) mean[(std::size_t)si] += acc[(std::size_t)si][(std::size_t)sd];
    mean[(std::size_t)si] /= 3.0;
  }
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "3-seed mean accuracy: %.3f @500, %.3f @1000, %.3f @2000 (eval on 2000 "
                "held-out images)",
                mean[0], mean[1], mean[2]);
  detail = buf;
  const bool monotone = mean[0] <= mean[1] + 1e-12 && mean[1] <= mean[2] + 1e-12;
  return mean[2] > 0.90 && monotone;
}

bool criterion_balance(std::string& detail) {
  // balance_by_anchor equalizes counts on the experiment dataset
  const Dataset ds = load_dataset(experiment_dataset());
  std::vector<int> labels;
  for (const auto& r : ds.records) labels.push_back(r.anchor_label);
  const auto idx = balance_indices_by_anchor(labels);
  std::array<int, 4> counts{};
  for (const std::size_t i : idx) counts[(std::size_t)labels[i]]++;
  if (!(counts[0] == counts[1] && counts[1] == counts[2] && counts[2] == counts[3])) {
    detail = "balanced per-anchor counts differ";
    return false;
  }

  const ExperimentSet& runs = all_runs();
  const double spread_bal =
      median3(runs.balanced[0].per_anchor_yaw_spread, runs.balanced[1].per_anchor_yaw_spread,
              runs.balanced[2].per_anchor_yaw_spread);
  const double spread_raw = median3(runs.unbalanced[0].per_anchor_yaw_spread,
                                    runs.unbalanced[1].per_anchor_yaw_spread,
                                    runs.unbalanced[2].per_anchor_yaw_spread);
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "per-anchor counts equal at %d; yaw-MAE spread balanced %.2f vs unbalanced "
                "%.2f deg (3-seed medians)",
                counts[0], spread_bal, spread_raw);
  detail = buf;
  return spread_bal <= spread_raw;
}

bool criterion_abnormality(std::string& detail) {
  const ExperimentSet& runs = all_runs();
  const double rate_default = median3(runs.balanced[0].abnormality_rate,
                                      runs.balanced[1].abnormality_rate,
                                      runs.balanced[2].abnormality_rate);
  const double rate_af = median3(runs.anchor_free[0].abnormality_rate,
                                 runs.anchor_free[1].abnormality_rate,
                                 runs.anchor_free[2].abnormality_rate);

  // proxy noise floor on oracle scenes (reported, not gated)
  const auto seg = experiment_segmenter();
  Rng rng(31415);
  const AbnormalityResult floor =
      layout_abnormality_oracle(*seg, 50, rng, experiment_priors(), 48, 0.05);

  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "abnormality anchor-free %.3f vs default %.3f (3-seed medians, 50 scenes); "
                "oracle noise floor %.3f",
                rate_af, rate_default, floor.rate);
  detail = buf;
  return rate_af > rate_default;
}

}  // namespace

void run_experiment_criteria(Reporter& rep) {
  rep.run("6 (anchor classifier scaling)", criterion_anchor_classifier);
  rep.run("5 (camera-prediction trend)", criterion_camera_trend);
  rep.run("7 (balancing ablation)", criterion_balance);
  rep.run("8 (abnormality-proxy ordering)", criterion_abnormality);
}

}  // namespace acc
