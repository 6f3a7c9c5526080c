#include "chillerlab/critic.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <fstream>
#include <functional>
#include <mutex>
#include <numeric>
#include <set>
#include <thread>

namespace chillerlab {

std::size_t expected_parameter_count(const NetArch& arch) {
    const std::size_t u = static_cast<std::size_t>(arch.units);
    std::size_t total = 0;
    for (const auto& t : arch.towers) {
        std::size_t in = t.feature_cols.size();
        for (int l = 0; l < arch.shared_hidden_layers; ++l) {
            total += u * in + u;
            in = u;
        }
        std::size_t per_head = 0;
        std::size_t hin = u;
        for (int l = 0; l < arch.per_head_hidden_layers; ++l) {
            per_head += u * hin + u;
            hin = u;
        }
        per_head += hin + 1; // linear output
        total += t.targets.size() * per_head;
    }
    return total;
}

std::vector<std::uint64_t> CriticHParams::resolved_seeds() const {
    if (!member_seeds.empty()) return member_seeds;
    std::vector<std::uint64_t> seeds;
    seeds.reserve(static_cast<std::size_t>(ensemble_size));
    for (int i = 0; i < ensemble_size; ++i)
        seeds.push_back(Rng::hash_mix(weight_seed ^ (0xc2b2ae3d27d4eb4fULL * static_cast<std::uint64_t>(i + 1))));
    return seeds;
}

std::size_t EnsembleModel::parameter_count() const {
    std::size_t n = 0;
    for (const auto& m : members_) n += m.parameter_count();
    return n;
}

namespace {

// Runs f(i) for i in [0, n) across up to `threads` workers. Each index is
// touched exactly once; work per index must be independent.
void parallel_for(int n, int threads, const std::function<void(int)>& f) {
    threads = std::max(1, std::min(threads, n));
    if (threads == 1) {
        for (int i = 0; i < n; ++i) f(i);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    std::exception_ptr error;
    std::mutex error_mu;
    for (int w = 0; w < threads; ++w) {
        pool.emplace_back([&] {
            for (;;) {
                const int i = next.fetch_add(1);
                if (i >= n) return;
                try {
                    f(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mu);
                    if (!error) error = std::current_exception();
                    return;
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
}

void validate_masks(const std::vector<FeatureMask>& masks, const FacilityConfig& cfg, int num_targets) {
    const auto names = feature_names(cfg);
    std::set<int> covered;
    for (const auto& m : masks) {
        if (m.features.empty()) throw ConfigError("mask '" + m.tower_name + "' selects no features");
        for (const auto& f : m.features)
            if (std::find(names.begin(), names.end(), f) == names.end())
                throw ConfigError("mask '" + m.tower_name + "' references unknown feature '" + f + "'");
        for (int t : m.targets) {
            if (t < 0 || t >= num_targets)
                throw ConfigError("mask '" + m.tower_name + "' references unknown target index");
            if (!covered.insert(t).second)
                throw ConfigError("target covered by more than one tower (index " + std::to_string(t) + ")");
        }
        if (std::find(m.targets.begin(), m.targets.end(), 0) != m.targets.end()) {
            for (const auto& a : cfg.action_names)
                if (std::find(m.features.begin(), m.features.end(), a) == m.features.end())
                    throw ConfigError("energy tower mask must include all action dims; missing '" + a + "'");
        }
    }
    if (static_cast<int>(covered.size()) != num_targets)
        throw ConfigError("masks do not cover every prediction head");
}

NetArch build_arch(const std::vector<FeatureMask>& masks, const std::vector<std::string>& features,
                   const CriticHParams& hp, int num_targets) {
    NetArch arch;
    arch.num_features = static_cast<int>(features.size());
    arch.num_targets = num_targets;
    arch.shared_hidden_layers = hp.shared_hidden_layers;
    arch.per_head_hidden_layers = hp.per_head_hidden_layers;
    arch.units = hp.units_per_layer;
    for (const auto& m : masks) {
        TowerArch t;
        for (const auto& f : m.features) {
            const auto it = std::find(features.begin(), features.end(), f);
            t.feature_cols.push_back(static_cast<int>(it - features.begin()));
        }
        t.targets = m.targets;
        arch.towers.push_back(std::move(t));
    }
    return arch;
}

} // namespace

EnsembleModel train(const std::vector<TrainingExample>& examples, const std::vector<FeatureMask>& masks,
                    const CriticHParams& hparams, const FacilityConfig& cfg) {
    if (examples.empty()) throw std::invalid_argument("train: no examples");
    if (hparams.ensemble_size < 1) throw std::invalid_argument("train: ensemble_size must be >= 1");
    const int num_targets = 1 + static_cast<int>(cfg.observation_constraints.size());
    validate_masks(masks, cfg, num_targets);

    EnsembleModel model;
    model.hparams_ = hparams;
    model.masks_ = masks;
    model.feature_names_ = feature_names(cfg);
    model.target_names_.push_back("energy");
    for (const auto& oc : cfg.observation_constraints) model.target_names_.push_back(oc.id);
    model.normalizers_ = fit_normalizers(examples);
    model.arch_ = build_arch(masks, model.feature_names_, hparams, num_targets);

    const std::size_t n = examples.size();
    const std::size_t f = model.feature_names_.size();

    // feature standardization (population moments, degenerate std -> 1)
    model.scaler_.mean.assign(f, 0.0);
    model.scaler_.std.assign(f, 1.0);
    for (const auto& ex : examples)
        for (std::size_t j = 0; j < f; ++j) model.scaler_.mean[j] += ex.features[j];
    for (std::size_t j = 0; j < f; ++j) model.scaler_.mean[j] /= static_cast<double>(n);
    std::vector<double> ss(f, 0.0);
    for (const auto& ex : examples)
        for (std::size_t j = 0; j < f; ++j) {
            const double d = ex.features[j] - model.scaler_.mean[j];
            ss[j] += d * d;
        }
    for (std::size_t j = 0; j < f; ++j) {
        const double sd = std::sqrt(ss[j] / static_cast<double>(n));
        model.scaler_.std[j] = sd > 0.0 ? sd : 1.0;
    }

    MatX<float> X(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(f));
    MatX<float> Y(static_cast<Eigen::Index>(n), num_targets);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < f; ++j)
            X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                static_cast<float>((examples[i].features[j] - model.scaler_.mean[j]) / model.scaler_.std[j]);
        Y(static_cast<Eigen::Index>(i), 0) = static_cast<float>(model.normalizers_.energy.apply(examples[i].energy_target_kw));
        for (int k = 1; k < num_targets; ++k)
            Y(static_cast<Eigen::Index>(i), k) = static_cast<float>(
                model.normalizers_.constraints[static_cast<std::size_t>(k - 1)].apply(
                    examples[i].constraint_targets[static_cast<std::size_t>(k - 1)]));
    }

    const auto seeds = hparams.resolved_seeds();
    model.members_.resize(static_cast<std::size_t>(hparams.ensemble_size));
    model.final_member_losses_.assign(static_cast<std::size_t>(hparams.ensemble_size), 0.0);

    parallel_for(hparams.ensemble_size, hparams.num_threads, [&](int mi) {
        MemberNetF net(model.arch_, seeds[static_cast<std::size_t>(mi)]);
        Rng order_rng(Rng::hash_mix(seeds[static_cast<std::size_t>(mi)] ^ 0xa5a5a5a5a5a5a5a5ULL));
        std::vector<int> perm(n);
        std::iota(perm.begin(), perm.end(), 0);
        const int bs = std::max(1, hparams.batch_size);
        float last_loss = 0.0f;
        for (int epoch = 0; epoch < hparams.epochs; ++epoch) {
            // Fisher-Yates with our deterministic rng
            for (std::size_t i = n; i > 1; --i) {
                const std::size_t j = static_cast<std::size_t>(order_rng.below(i));
                std::swap(perm[i - 1], perm[j]);
            }
            float epoch_loss = 0.0f;
            int batches = 0;
            for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(bs)) {
                const std::size_t count = std::min(static_cast<std::size_t>(bs), n - start);
                MatX<float> Xb(static_cast<Eigen::Index>(count), X.cols());
                MatX<float> Yb(static_cast<Eigen::Index>(count), Y.cols());
                for (std::size_t r = 0; r < count; ++r) {
                    Xb.row(static_cast<Eigen::Index>(r)) = X.row(perm[start + r]);
                    Yb.row(static_cast<Eigen::Index>(r)) = Y.row(perm[start + r]);
                }
                net.zero_gradients();
                const float loss = net.backward(Xb, Yb);
                if (!std::isfinite(loss))
                    throw std::runtime_error("train: non-finite loss (member " + std::to_string(mi) + ", epoch " +
                                             std::to_string(epoch) + ")");
                net.adam_step(static_cast<float>(hparams.learning_rate));
                epoch_loss += loss;
                ++batches;
            }
            last_loss = epoch_loss / static_cast<float>(std::max(1, batches));
        }
        model.final_member_losses_[static_cast<std::size_t>(mi)] = last_loss;
        model.members_[static_cast<std::size_t>(mi)] = std::move(net);
    });

    return model;
}

std::vector<EnsemblePrediction> EnsembleModel::predict_features(const std::vector<std::vector<double>>& rows) const {
    if (members_.empty()) throw std::runtime_error("predict: model has no members");
    const std::size_t n = rows.size();
    const std::size_t f = feature_names_.size();
    MatX<float> X(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(f));
    for (std::size_t i = 0; i < n; ++i) {
        if (rows[i].size() != f) throw EvalError("predict: feature row size mismatch");
        for (std::size_t j = 0; j < f; ++j) {
            if (std::isnan(rows[i][j])) throw EvalError("predict: missing feature '" + feature_names_[j] + "'");
            X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                static_cast<float>((rows[i][j] - scaler_.mean[j]) / scaler_.std[j]);
        }
    }

    const int num_targets = arch_.num_targets;
    const std::size_t m = members_.size();
    std::vector<MatX<float>> outputs(m);
    parallel_for(static_cast<int>(m), hparams_.num_threads,
                 [&](int mi) { outputs[static_cast<std::size_t>(mi)] = members_[static_cast<std::size_t>(mi)].forward(X); });

    std::vector<EnsemblePrediction> preds(n);
    for (std::size_t i = 0; i < n; ++i) {
        EnsemblePrediction& p = preds[i];
        p.constraints.resize(static_cast<std::size_t>(num_targets - 1));
        for (int t = 0; t < num_targets; ++t) {
            double mean = 0.0;
            for (std::size_t mi = 0; mi < m; ++mi) mean += outputs[mi](static_cast<Eigen::Index>(i), t);
            mean /= static_cast<double>(m);
            double var = 0.0;
            for (std::size_t mi = 0; mi < m; ++mi) {
                const double d = outputs[mi](static_cast<Eigen::Index>(i), t) - mean;
                var += d * d;
            }
            var /= static_cast<double>(m); // population std across members
            const double sd = std::sqrt(std::max(0.0, var));
            const Normalizer& nz = t == 0 ? normalizers_.energy : normalizers_.constraints[static_cast<std::size_t>(t - 1)];
            HeadPrediction hp;
            hp.mu = nz.invert(mean);
            hp.sigma = sd * nz.std;
            if (t == 0)
                p.energy = hp;
            else
                p.constraints[static_cast<std::size_t>(t - 1)] = hp;
        }
    }
    return preds;
}

std::vector<EnsemblePrediction> EnsembleModel::predict(const PlantState& state,
                                                       const std::vector<ActionVector>& actions) const {
    std::vector<std::vector<double>> rows;
    rows.reserve(actions.size());
    for (const auto& a : actions) {
        std::vector<double> row = state.sensors;
        row.insert(row.end(), a.values.begin(), a.values.end());
        rows.push_back(std::move(row));
    }
    return predict_features(rows);
}

GradientCheckResult gradient_check(MemberNetD& net, const MatX<double>& X, const MatX<double>& Y, double step) {
    GradientCheckResult res;
    const std::vector<double> grad = net.analytic_gradient(X, Y);
    std::vector<double> params = net.flatten_parameters();
    res.params_checked = params.size();
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double orig = params[i];
        params[i] = orig + step;
        net.set_parameters(params);
        const double lp = net.loss(X, Y);
        params[i] = orig - step;
        net.set_parameters(params);
        const double lm = net.loss(X, Y);
        params[i] = orig;
        const double fd = (lp - lm) / (2.0 * step);
        const double denom = std::max({std::abs(grad[i]), std::abs(fd), 1e-6});
        res.max_rel_error = std::max(res.max_rel_error, std::abs(grad[i] - fd) / denom);
    }
    net.set_parameters(params);
    return res;
}

std::vector<std::vector<double>> sensitivity(const EnsembleModel& model, const FacilityConfig& cfg,
                                             const PlantState& anchor_state, const ActionVector& anchor_action,
                                             int action_dim, const std::vector<double>& deltas) {
    if (action_dim < 0 || action_dim >= static_cast<int>(cfg.action_dims.size()))
        throw std::invalid_argument("sensitivity: bad action dim");
    const auto& spec = cfg.action_dims[static_cast<std::size_t>(action_dim)];
    std::vector<ActionVector> batch;
    batch.push_back(anchor_action);
    for (double d : deltas) {
        ActionVector a = anchor_action;
        a.values[static_cast<std::size_t>(action_dim)] += d;
        if (!spec.on_grid(a.values[static_cast<std::size_t>(action_dim)]) ||
            a.values[static_cast<std::size_t>(action_dim)] < spec.low - 1e-9 ||
            (spec.kind == ActionKind::Continuous && a.values[static_cast<std::size_t>(action_dim)] > spec.high + 1e-9))
            throw std::invalid_argument("sensitivity: delta " + std::to_string(d) + " leaves the '" + spec.name +
                                        "' grid");
        batch.push_back(std::move(a));
    }
    const auto preds = model.predict(anchor_state, batch);
    std::vector<std::vector<double>> out;
    for (std::size_t di = 1; di < preds.size(); ++di) {
        std::vector<double> per_head;
        per_head.push_back(preds[di].energy.mu - preds[0].energy.mu);
        for (std::size_t k = 0; k < preds[di].constraints.size(); ++k)
            per_head.push_back(preds[di].constraints[k].mu - preds[0].constraints[k].mu);
        out.push_back(std::move(per_head));
    }
    return out;
}

std::vector<double> feature_importance(const EnsembleModel& model, const std::vector<TrainingExample>& examples,
                                       int n_anchors, int n_resamples, std::uint64_t seed) {
    if (examples.size() < 100) throw std::invalid_argument("feature_importance: need at least 100 examples");
    const std::size_t f = model.feature_names().size();
    Rng rng(seed);
    std::vector<std::size_t> anchor_idx;
    for (int i = 0; i < n_anchors; ++i) anchor_idx.push_back(static_cast<std::size_t>(rng.below(examples.size())));

    std::vector<double> scores(f, 0.0);
    std::vector<std::vector<double>> rows;
    rows.reserve(static_cast<std::size_t>(n_anchors * n_resamples));
    for (std::size_t j = 0; j < f; ++j) {
        rows.clear();
        for (std::size_t ai : anchor_idx) {
            for (int r = 0; r < n_resamples; ++r) {
                std::vector<double> row = examples[ai].features;
                row[j] = examples[rng.below(examples.size())].features[j];
                rows.push_back(std::move(row));
            }
        }
        const auto preds = model.predict_features(rows);
        double score = 0.0;
        for (int a = 0; a < n_anchors; ++a) {
            const std::size_t base = static_cast<std::size_t>(a * n_resamples);
            const std::size_t heads = 1 + preds[base].constraints.size();
            for (std::size_t h = 0; h < heads; ++h) {
                double mean = 0.0;
                for (int r = 0; r < n_resamples; ++r) {
                    const auto& p = preds[base + static_cast<std::size_t>(r)];
                    mean += h == 0 ? p.energy.mu : p.constraints[h - 1].mu;
                }
                mean /= n_resamples;
                double var = 0.0;
                for (int r = 0; r < n_resamples; ++r) {
                    const auto& p = preds[base + static_cast<std::size_t>(r)];
                    const double v = (h == 0 ? p.energy.mu : p.constraints[h - 1].mu) - mean;
                    var += v * v;
                }
                score += var / n_resamples;
            }
        }
        scores[j] = score / n_anchors;
    }
    return scores;
}

namespace {

void put_u32(std::ostream& out, std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); }
void put_u64(std::ostream& out, std::uint64_t v) { out.write(reinterpret_cast<const char*>(&v), 8); }
void put_f64(std::ostream& out, double v) { out.write(reinterpret_cast<const char*>(&v), 8); }
void put_str(std::ostream& out, const std::string& s) {
    put_u32(out, static_cast<std::uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::uint32_t get_u32(std::istream& in) {
    std::uint32_t v;
    in.read(reinterpret_cast<char*>(&v), 4);
    return v;
}
std::uint64_t get_u64(std::istream& in) {
    std::uint64_t v;
    in.read(reinterpret_cast<char*>(&v), 8);
    return v;
}
double get_f64(std::istream& in) {
    double v;
    in.read(reinterpret_cast<char*>(&v), 8);
    return v;
}
std::string get_str(std::istream& in) {
    const std::uint32_t n = get_u32(in);
    std::string s(n, '\0');
    in.read(s.data(), n);
    return s;
}

constexpr char kMagic[8] = {'C', 'L', 'C', 'K', '0', '0', '0', '1'};

} // namespace

void EnsembleModel::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out.write(kMagic, 8);

    put_u32(out, static_cast<std::uint32_t>(hparams_.ensemble_size));
    put_u32(out, static_cast<std::uint32_t>(hparams_.shared_hidden_layers));
    put_u32(out, static_cast<std::uint32_t>(hparams_.per_head_hidden_layers));
    put_u32(out, static_cast<std::uint32_t>(hparams_.units_per_layer));
    put_f64(out, hparams_.learning_rate);
    put_u32(out, static_cast<std::uint32_t>(hparams_.epochs));
    put_u32(out, static_cast<std::uint32_t>(hparams_.batch_size));
    put_u64(out, hparams_.weight_seed);

    put_u32(out, static_cast<std::uint32_t>(feature_names_.size()));
    for (const auto& s : feature_names_) put_str(out, s);
    put_u32(out, static_cast<std::uint32_t>(target_names_.size()));
    for (const auto& s : target_names_) put_str(out, s);

    put_u32(out, static_cast<std::uint32_t>(masks_.size()));
    for (const auto& m : masks_) {
        put_str(out, m.tower_name);
        put_u32(out, static_cast<std::uint32_t>(m.features.size()));
        for (const auto& s : m.features) put_str(out, s);
        put_u32(out, static_cast<std::uint32_t>(m.targets.size()));
        for (int t : m.targets) put_u32(out, static_cast<std::uint32_t>(t));
    }

    for (std::size_t j = 0; j < feature_names_.size(); ++j) {
        put_f64(out, scaler_.mean[j]);
        put_f64(out, scaler_.std[j]);
    }
    auto put_norm = [&](const Normalizer& z) {
        put_f64(out, z.mean);
        put_f64(out, z.std);
        put_u32(out, z.degenerate ? 1 : 0);
    };
    put_norm(normalizers_.energy);
    put_u32(out, static_cast<std::uint32_t>(normalizers_.constraints.size()));
    for (const auto& z : normalizers_.constraints) put_norm(z);

    put_u32(out, static_cast<std::uint32_t>(members_.size()));
    for (const auto& net : members_) {
        put_u64(out, net.seed());
        const auto params = net.flatten_parameters();
        put_u64(out, params.size());
        out.write(reinterpret_cast<const char*>(params.data()),
                  static_cast<std::streamsize>(params.size() * sizeof(float)));
    }
    if (!out) throw IoError("write failed for '" + path + "'");
}

EnsembleModel EnsembleModel::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "'");
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kMagic, 8) != 0) throw IoError("'" + path + "' is not a model checkpoint");

    EnsembleModel model;
    model.hparams_.ensemble_size = static_cast<int>(get_u32(in));
    model.hparams_.shared_hidden_layers = static_cast<int>(get_u32(in));
    model.hparams_.per_head_hidden_layers = static_cast<int>(get_u32(in));
    model.hparams_.units_per_layer = static_cast<int>(get_u32(in));
    model.hparams_.learning_rate = get_f64(in);
    model.hparams_.epochs = static_cast<int>(get_u32(in));
    model.hparams_.batch_size = static_cast<int>(get_u32(in));
    model.hparams_.weight_seed = get_u64(in);

    const std::uint32_t nf = get_u32(in);
    for (std::uint32_t i = 0; i < nf; ++i) model.feature_names_.push_back(get_str(in));
    const std::uint32_t nt = get_u32(in);
    for (std::uint32_t i = 0; i < nt; ++i) model.target_names_.push_back(get_str(in));

    const std::uint32_t nm = get_u32(in);
    for (std::uint32_t i = 0; i < nm; ++i) {
        FeatureMask m;
        m.tower_name = get_str(in);
        const std::uint32_t mf = get_u32(in);
        for (std::uint32_t j = 0; j < mf; ++j) m.features.push_back(get_str(in));
        const std::uint32_t mt = get_u32(in);
        for (std::uint32_t j = 0; j < mt; ++j) m.targets.push_back(static_cast<int>(get_u32(in)));
        model.masks_.push_back(std::move(m));
    }

    model.scaler_.mean.resize(nf);
    model.scaler_.std.resize(nf);
    for (std::uint32_t j = 0; j < nf; ++j) {
        model.scaler_.mean[j] = get_f64(in);
        model.scaler_.std[j] = get_f64(in);
    }
    auto get_norm = [&]() {
        Normalizer z;
        z.mean = get_f64(in);
        z.std = get_f64(in);
        z.degenerate = get_u32(in) != 0;
        return z;
    };
    model.normalizers_.energy = get_norm();
    const std::uint32_t nc = get_u32(in);
    for (std::uint32_t i = 0; i < nc; ++i) model.normalizers_.constraints.push_back(get_norm());

    model.arch_.num_features = static_cast<int>(nf);
    model.arch_.num_targets = static_cast<int>(nt);
    model.arch_.shared_hidden_layers = model.hparams_.shared_hidden_layers;
    model.arch_.per_head_hidden_layers = model.hparams_.per_head_hidden_layers;
    model.arch_.units = model.hparams_.units_per_layer;
    for (const auto& m : model.masks_) {
        TowerArch t;
        for (const auto& f : m.features) {
            const auto it = std::find(model.feature_names_.begin(), model.feature_names_.end(), f);
            if (it == model.feature_names_.end()) throw IoError("checkpoint mask references unknown feature");
            t.feature_cols.push_back(static_cast<int>(it - model.feature_names_.begin()));
        }
        t.targets = m.targets;
        model.arch_.towers.push_back(std::move(t));
    }

    const std::uint32_t nmem = get_u32(in);
    for (std::uint32_t i = 0; i < nmem; ++i) {
        const std::uint64_t seed = get_u64(in);
        const std::uint64_t count = get_u64(in);
        std::vector<float> params(count);
        in.read(reinterpret_cast<char*>(params.data()), static_cast<std::streamsize>(count * sizeof(float)));
        MemberNetF net(model.arch_, seed);
        net.set_parameters(params);
        model.members_.push_back(std::move(net));
    }
    if (!in) throw IoError("truncated checkpoint '" + path + "'");
    model.final_member_losses_.assign(model.members_.size(), 0.0);
    return model;
}

} // namespace chillerlab
