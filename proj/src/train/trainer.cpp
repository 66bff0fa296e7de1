#include "train/trainer.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

#include "core/graph.hpp"
#include "core/parallel.hpp"
#include "core/rng.hpp"
#include "metrics/metrics.hpp"
#include "model/model.hpp"
#include "tpa/tpa.hpp"

namespace sdr::train {

namespace {

constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;

void shuffle_indices(std::vector<std::size_t>& idx, core::Rng& rng) {
    for (std::size_t i = idx.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(i) - 1));
        std::swap(idx[i - 1], idx[j]);
    }
}

std::vector<clipgen::Clip> branch_views(const clipgen::Clip& clip, const TrainConfig& cfg,
                                        core::Rng rng) {
    if (!cfg.model.use_trfi) return {clip};
    return tpa::apply_all_branches(clip, rng, cfg.model.n_branches, cfg.tpa_enabled);
}

} // namespace

std::string fmt_g(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

EvalResult evaluate(core::ParamStore<float>& params, const model::ModelConfig& cfg,
                    const std::vector<Clip>& clips) {
    if (clips.empty()) throw DataError("evaluate: empty split");
    // forward-only scoring reads the store, so clips can fan out to workers
    std::vector<metrics::ClipScore> per_clip(clips.size());
    core::parallel_for(static_cast<std::int64_t>(clips.size()), [&](std::int64_t i) {
        const Clip& clip = clips[static_cast<std::size_t>(i)];
        per_clip[static_cast<std::size_t>(i)] = {clip.video_id,
                                                 model::score_clip(clip, params, cfg), clip.label};
    });
    std::vector<double> scores;
    std::vector<int> labels;
    metrics::video_level(per_clip, scores, labels);
    EvalResult r;
    r.auc = metrics::auc(scores, labels);
    r.acc = metrics::acc(scores, labels);
    return r;
}

TrainOutput train_run(TrainConfig cfg, const std::vector<Clip>& train_clips,
                      const std::vector<Clip>& test_clips, const LogFn& log) {
    if (train_clips.empty()) throw DataError("train_run: empty training set");
    cfg.model.t_in = train_clips.front().t;
    cfg.model.input_channels = train_clips.front().c;
    cfg.validate();

    TrainOutput out{core::ParamStore<float>(cfg.seed), {}, {}};
    core::ParamStore<float>& ps = out.params;
    model::init_params(ps, cfg.model);
    out.metrics.param_count = ps.scalar_count();

    std::vector<std::size_t> real_idx, fake_idx;
    for (std::size_t i = 0; i < train_clips.size(); ++i) {
        (train_clips[i].label == 0 ? real_idx : fake_idx).push_back(i);
    }
    const int half = cfg.batch_size / 2;
    const std::size_t pairs = std::min(real_idx.size(), fake_idx.size());
    const int steps_per_epoch = static_cast<int>(pairs) / half;
    if (steps_per_epoch < 1) {
        throw DataError("train_run: not enough clips per class for one balanced batch");
    }

    const core::Rng root(cfg.seed);
    int global_step = 0;
    bool warned_small_batch = false;
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        core::Rng shuffle_rng = root.fork(0xE70C50ull + static_cast<std::uint64_t>(epoch));
        shuffle_indices(real_idx, shuffle_rng);
        shuffle_indices(fake_idx, shuffle_rng);
        for (int step = 0; step < steps_per_epoch; ++step) {
            std::vector<model::SampleInput> batch;
            batch.reserve(static_cast<std::size_t>(cfg.batch_size));
            core::Rng step_rng = root.fork(0x57E9ull).fork(static_cast<std::uint64_t>(global_step));
            for (int slot = 0; slot < cfg.batch_size; ++slot) {
                const bool fake = slot >= half;
                const std::size_t idx = fake ? fake_idx[static_cast<std::size_t>(step * half + slot - half)]
                                             : real_idx[static_cast<std::size_t>(step * half + slot)];
                const Clip& clip = train_clips[idx];
                model::SampleInput sample;
                sample.label = clip.label;
                sample.branches = branch_views(clip, cfg, step_rng.fork(static_cast<std::uint64_t>(slot)));
                batch.push_back(std::move(sample));
            }

            try {
                core::Graph<float> g(true);
                auto nodes = model::batch_forward(g, batch, ps, cfg.model, cfg.weights, cfg.tau);
                if (cfg.weights.beta > 0 && !nodes.con && !warned_small_batch && log) {
                    log("warning: batch too small for the contrastive term; weighting it zero");
                    warned_small_batch = true;
                }
                g.backward(nodes.total);
                ps.adam_step(cfg.lr, kAdamBeta1, kAdamBeta2, kAdamEps, global_step + 1);

                StepRecord rec;
                rec.step = global_step + 1;
                rec.epoch = epoch;
                rec.l_ce = static_cast<double>(g.value(nodes.ce)[0]);
                rec.total = static_cast<double>(g.value(nodes.total)[0]);
                if (nodes.mi) rec.l_mi = static_cast<double>(g.value(*nodes.mi)[0]);
                if (nodes.con) rec.l_con = static_cast<double>(g.value(*nodes.con)[0]);
                if (nodes.mean_kl) rec.mean_kl = static_cast<double>(g.value(*nodes.mean_kl)[0]);
                out.history.steps.push_back(rec);
            } catch (const NumericError& e) {
                throw NumericError("numeric failure at step " + std::to_string(global_step + 1) +
                                   ": " + e.what());
            }
            ++global_step;
        }
        const bool last = epoch == cfg.epochs;
        if (last || (cfg.eval_every > 0 && epoch % cfg.eval_every == 0)) {
            std::string line = "epoch " + std::to_string(epoch) + ":";
            if (cfg.eval_train) {
                const EvalResult tr = evaluate(ps, cfg.model, train_clips);
                out.history.evals.push_back({epoch, "train", tr.auc, tr.acc});
                line += " train auc " + fmt_g(tr.auc) + " acc " + fmt_g(tr.acc);
                if (last) {
                    out.metrics.train_auc = tr.auc;
                    out.metrics.train_acc = tr.acc;
                }
            }
            if (!test_clips.empty()) {
                const EvalResult te = evaluate(ps, cfg.model, test_clips);
                out.history.evals.push_back({epoch, "test", te.auc, te.acc});
                line += " test auc " + fmt_g(te.auc) + " acc " + fmt_g(te.acc);
                if (last) {
                    out.metrics.test_auc = te.auc;
                    out.metrics.test_acc = te.acc;
                }
            }
            if (log) log(line);
        }
    }
    out.metrics.steps = global_step;
    return out;
}

std::string history_csv_header() {
    return "record,step,epoch,l_mi,l_con,l_ce,total,mean_sum_kl,split,auc,acc";
}

void write_history_csv(const std::string& path, const TrainHistory& history) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for writing: " + path);
    os << history_csv_header() << '\n';
    auto opt = [](const std::optional<double>& v) { return v ? fmt_g(*v) : std::string(); };
    for (const StepRecord& s : history.steps) {
        os << "step," << s.step << ',' << s.epoch << ',' << opt(s.l_mi) << ',' << opt(s.l_con)
           << ',' << fmt_g(s.l_ce) << ',' << fmt_g(s.total) << ',' << opt(s.mean_kl) << ",,,\n";
    }
    for (const EvalRecord& e : history.evals) {
        os << "eval,," << e.epoch << ",,,,,," << e.split << ',' << fmt_g(e.auc) << ','
           << fmt_g(e.acc) << '\n';
    }
    if (!os) throw IoError("write failed: " + path);
}

} // namespace sdr::train
