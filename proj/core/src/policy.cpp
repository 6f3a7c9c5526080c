#include "chillerlab/policy.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <unordered_set>

#include "chillerlab/soo_baseline.hpp"

namespace chillerlab {

namespace {

void collect_action_indices(const Expression& e, std::vector<int>& out) {
    if (e.op == ExprOp::ActionRef) out.push_back(e.index);
    if (e.lhs) collect_action_indices(*e.lhs, out);
    if (e.rhs) collect_action_indices(*e.rhs, out);
}

bool constraint_holds(const ActionConstraint& c, std::span<const double> sensors, std::span<const double> actions) {
    const double lhs = evaluate(*c.lhs, sensors, actions);
    const double rhs = evaluate(*c.rhs, sensors, actions);
    return c.cmp == Comparator::Le ? lhs <= rhs : lhs >= rhs;
}

struct UnionFind {
    std::vector<int> parent;
    explicit UnionFind(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
    int find(int x) {
        while (parent[static_cast<std::size_t>(x)] != x) {
            parent[static_cast<std::size_t>(x)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(x)])];
            x = parent[static_cast<std::size_t>(x)];
        }
        return x;
    }
    void unite(int a, int b) {
        a = find(a);
        b = find(b);
        if (a != b) parent[static_cast<std::size_t>(b)] = a;
    }
};

// Kahan-compensated sum.
double stable_sum(const std::vector<double>& xs) {
    double s = 0.0, c = 0.0;
    for (double x : xs) {
        const double y = x - c;
        const double t = s + y;
        c = (t - s) - y;
        s = t;
    }
    return s;
}

} // namespace

ChillerDecision chiller_heuristic(const PlantState& state, const PlantLayout& layout,
                                  const ChillerHeuristicRules& rules, ChillerHeuristicState& hs,
                                  std::int64_t t_min) {
    const double load = state.sensors[static_cast<std::size_t>(layout.load)];
    const double wb = state.sensors[static_cast<std::size_t>(layout.wet_bulb)];

    ModeName desired_mode = hs.mode;
    if (wb < rules.fc_wet_bulb_on_f)
        desired_mode = ModeName::FreeCooling;
    else if (wb > rules.fc_wet_bulb_off_f)
        desired_mode = ModeName::Mechanical;

    const int desired_count = stage_with_hysteresis(hs.count, load, rules.breakpoints_tons, rules.hysteresis_tons);

    if ((desired_count != hs.count || desired_mode != hs.mode) &&
        static_cast<double>(t_min - hs.last_toggle_min) >= rules.min_toggle_minutes) {
        hs.count = desired_count;
        hs.mode = desired_mode;
        hs.last_toggle_min = t_min;
    }
    return {hs.count, hs.mode};
}

std::vector<ActionVector> generate_candidates(const FacilityConfig& cfg, const ActionVector& prev_action,
                                              const PlantState& state, const PolicyHParams& hparams, Rng& rng,
                                              const CandidateOptions& options) {
    const std::size_t n_dims = cfg.action_dims.size();
    std::vector<std::optional<double>> pin(n_dims);
    for (const auto& [idx, v] : options.pinned)
        pin[static_cast<std::size_t>(idx)] = cfg.action_dims[static_cast<std::size_t>(idx)].snap(v);

    // Per-dim candidate values.
    std::vector<std::vector<double>> values(n_dims);
    for (std::size_t d = 0; d < n_dims; ++d) {
        const auto& spec = cfg.action_dims[d];
        if (pin[d]) {
            values[d] = {*pin[d]};
            continue;
        }
        if (spec.kind == ActionKind::Discrete) {
            values[d] = spec.values;
            continue;
        }
        const double prev = spec.snap(prev_action.values[d]);
        std::vector<double>& out = values[d];
        out.push_back(prev);
        const double s = spec.step_size;
        for (int dir : {+1, -1}) {
            const double span = dir > 0 ? spec.high - prev : prev - spec.low;
            if (span < s) continue;
            const double log_lo = std::log(s);
            const double log_hi = std::log(span);
            for (int k = 0; k < hparams.samples_per_direction; ++k) {
                const double mag = std::exp(rng.uniform(log_lo, log_hi));
                out.push_back(spec.snap(prev + dir * mag));
            }
        }
        std::sort(out.begin(), out.end());
        out.erase(std::unique(out.begin(), out.end()), out.end());
    }

    // Active constraints and their unpinned dims.
    struct PendingConstraint {
        const ActionConstraint* c;
        std::vector<int> free_dims;   // ascending
    };
    std::vector<PendingConstraint> pending;
    std::vector<double> scratch(n_dims, std::nan(""));
    for (std::size_t d = 0; d < n_dims; ++d)
        if (pin[d]) scratch[d] = *pin[d];

    for (const auto& c : cfg.action_constraints) {
        if (options.mode && !options.mode->constraint_active(c.id)) continue;
        std::vector<int> refs;
        collect_action_indices(*c.lhs, refs);
        collect_action_indices(*c.rhs, refs);
        std::sort(refs.begin(), refs.end());
        refs.erase(std::unique(refs.begin(), refs.end()), refs.end());
        std::vector<int> free_dims;
        for (int r : refs)
            if (!pin[static_cast<std::size_t>(r)]) free_dims.push_back(r);
        if (free_dims.empty()) {
            // fully determined by pins and sensors; an infeasible pin set
            // yields no candidates at all
            if (!constraint_holds(c, state.sensors, scratch)) return {};
            continue;
        }
        pending.push_back({&c, std::move(free_dims)});
    }

    // Connected components of dims linked through shared constraints.
    UnionFind uf(n_dims);
    for (const auto& pc : pending)
        for (std::size_t i = 1; i < pc.free_dims.size(); ++i) uf.unite(pc.free_dims[0], pc.free_dims[i]);

    std::vector<std::vector<int>> components;   // dims, ascending, grouped by root
    {
        std::vector<int> root_to_comp(n_dims, -1);
        for (std::size_t d = 0; d < n_dims; ++d) {
            if (pin[d]) continue;
            const int root = uf.find(static_cast<int>(d));
            if (root_to_comp[static_cast<std::size_t>(root)] < 0) {
                root_to_comp[static_cast<std::size_t>(root)] = static_cast<int>(components.size());
                components.emplace_back();
            }
            components[static_cast<std::size_t>(root_to_comp[static_cast<std::size_t>(root)])].push_back(
                static_cast<int>(d));
        }
    }

    // Enumerate each component's valid tuples with partial-assignment pruning.
    struct Component {
        std::vector<int> dims;
        std::vector<std::vector<double>> tuples;
    };
    std::vector<Component> comps;
    for (auto& dims : components) {
        Component comp;
        comp.dims = dims;

        // constraint -> position of its last free dim within this component
        std::vector<std::pair<const ActionConstraint*, std::size_t>> checks;
        for (const auto& pc : pending) {
            if (uf.find(pc.free_dims[0]) != uf.find(comp.dims[0])) continue;
            std::size_t last = 0;
            for (int fd : pc.free_dims) {
                const auto it = std::find(comp.dims.begin(), comp.dims.end(), fd);
                last = std::max(last, static_cast<std::size_t>(it - comp.dims.begin()));
            }
            checks.push_back({pc.c, last});
        }

        std::vector<double> tuple(comp.dims.size());
        const std::size_t tuple_cap = 5000000;
        auto dfs = [&](auto&& self, std::size_t depth) -> void {
            if (depth == comp.dims.size()) {
                comp.tuples.push_back(tuple);
                if (comp.tuples.size() > tuple_cap)
                    throw std::runtime_error("generate_candidates: constraint component too dense to enumerate");
                return;
            }
            const int dim = comp.dims[depth];
            for (double v : values[static_cast<std::size_t>(dim)]) {
                scratch[static_cast<std::size_t>(dim)] = v;
                tuple[depth] = v;
                bool ok = true;
                for (const auto& [c, last] : checks)
                    if (last == depth && !constraint_holds(*c, state.sensors, scratch)) {
                        ok = false;
                        break;
                    }
                if (ok) self(self, depth + 1);
            }
            scratch[static_cast<std::size_t>(dim)] = std::nan("");
        };
        dfs(dfs, 0);
        if (comp.tuples.empty()) return {};
        comps.push_back(std::move(comp));
    }

    long double total = 1.0L;
    for (const auto& comp : comps) total *= static_cast<long double>(comp.tuples.size());
    if (total > 9e18L) throw std::runtime_error("generate_candidates: candidate space exceeds index range");
    const std::uint64_t n_total = static_cast<std::uint64_t>(total);
    const std::uint64_t cap = static_cast<std::uint64_t>(std::max(1, hparams.candidate_cap));

    // Candidate indices to emit. Above the cap each candidate is kept with
    // probability cap/N (then trimmed to the cap in the rare overshoot).
    std::vector<std::uint64_t> keep;
    if (n_total <= cap) {
        keep.resize(n_total);
        std::iota(keep.begin(), keep.end(), 0);
    } else {
        const double p = static_cast<double>(cap) / static_cast<double>(n_total);
        if (n_total <= 4000000) {
            for (std::uint64_t i = 0; i < n_total; ++i)
                if (rng.uniform() < p) keep.push_back(i);
        } else {
            const double sigma = std::sqrt(static_cast<double>(cap) * (1.0 - p));
            const double k_approx = static_cast<double>(cap) + sigma * rng.normal();
            const std::uint64_t k =
                static_cast<std::uint64_t>(std::clamp(k_approx, 0.0, static_cast<double>(cap)));
            std::unordered_set<std::uint64_t> chosen;
            chosen.reserve(static_cast<std::size_t>(k) * 2);
            for (std::uint64_t j = n_total - k; j < n_total; ++j) {
                const std::uint64_t t = rng.below(j + 1);
                if (!chosen.insert(t).second) chosen.insert(j);
            }
            keep.assign(chosen.begin(), chosen.end());
            std::sort(keep.begin(), keep.end());
        }
        if (keep.size() > cap) {
            for (std::size_t i = 0; i < cap; ++i) {
                const std::size_t j = i + static_cast<std::size_t>(rng.below(keep.size() - i));
                std::swap(keep[i], keep[j]);
            }
            keep.resize(cap);
            std::sort(keep.begin(), keep.end());
        }
    }

    // Decode mixed-radix indices into actions.
    std::vector<ActionVector> result;
    result.reserve(keep.size());
    ActionVector base;
    base.values.assign(n_dims, 0.0);
    for (std::size_t d = 0; d < n_dims; ++d)
        if (pin[d]) base.values[d] = *pin[d];
    for (std::uint64_t index : keep) {
        ActionVector a = base;
        std::uint64_t rem = index;
        for (const auto& comp : comps) {
            const std::uint64_t size = comp.tuples.size();
            const std::uint64_t sel = rem % size;
            rem /= size;
            const auto& tuple = comp.tuples[static_cast<std::size_t>(sel)];
            for (std::size_t k = 0; k < comp.dims.size(); ++k)
                a.values[static_cast<std::size_t>(comp.dims[k])] = tuple[k];
        }
        result.push_back(std::move(a));
    }
    return result;
}

std::vector<std::size_t> filter_candidates(const std::vector<EnsemblePrediction>& predictions,
                                           const FacilityConfig& cfg, const PlantState& state, double alpha,
                                           const ModeSpec* mode) {
    std::vector<std::pair<std::size_t, double>> bounds;   // constraint index -> u
    for (std::size_t k = 0; k < cfg.observation_constraints.size(); ++k) {
        const auto& oc = cfg.observation_constraints[k];
        if (mode && !mode->constraint_active(oc.id)) continue;
        bounds.push_back({k, evaluate_bound(cfg, state, oc)});
    }

    std::vector<std::size_t> survivors;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        bool ok = true;
        for (const auto& [k, u] : bounds) {
            const auto& hp = predictions[i].constraints[k];
            const auto& oc = cfg.observation_constraints[k];
            if (oc.direction == BoundDirection::MaxLe ? hp.mu + alpha * hp.sigma > u : hp.mu - alpha * hp.sigma < u) {
                ok = false;
                break;
            }
        }
        if (ok) survivors.push_back(i);
    }
    return survivors;
}

std::vector<double> softmax_probabilities(const std::vector<double>& scores, double beta) {
    std::vector<double> logits(scores.size());
    double max_logit = -1e300;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        logits[i] = beta * scores[i];
        max_logit = std::max(max_logit, logits[i]);
    }
    std::vector<double> expd(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) expd[i] = std::exp(logits[i] - max_logit);
    const double denom = stable_sum(expd);
    for (auto& e : expd) e /= denom;
    // exact second normalization pass so the probabilities sum to 1
    const double total = stable_sum(expd);
    for (auto& e : expd) e /= total;
    return expd;
}

Selection select_action(const std::vector<EnsemblePrediction>& surviving, const PolicyHParams& hparams,
                        double energy_scale, Rng& rng) {
    if (surviving.empty()) throw std::invalid_argument("select_action: empty candidate set");
    Selection sel;
    const double x = rng.uniform();
    if (x >= hparams.epsilon) {
        sel.branch = DecisionRecord::Branch::Exploit;
        double best = -1e300;
        for (std::size_t i = 0; i < surviving.size(); ++i) {
            const double score = -surviving[i].energy.mu - hparams.alpha * surviving[i].energy.sigma;
            if (score > best) {   // strict: ties keep the lowest index
                best = score;
                sel.index = i;
            }
        }
    } else {
        sel.branch = DecisionRecord::Branch::Explore;
        const double scale = energy_scale > 0.0 ? energy_scale : 1.0;
        std::vector<double> scores(surviving.size());
        for (std::size_t i = 0; i < surviving.size(); ++i)
            scores[i] = (-surviving[i].energy.mu + hparams.alpha * surviving[i].energy.sigma) / scale;
        const std::vector<double> probs = softmax_probabilities(scores, hparams.beta);
        const double u = rng.uniform();
        double cum = 0.0;
        sel.index = surviving.size() - 1;
        for (std::size_t i = 0; i < probs.size(); ++i) {
            cum += probs[i];
            if (u < cum) {
                sel.index = i;
                break;
            }
        }
    }
    return sel;
}

std::string_view to_string(DecisionRecord::Branch b) {
    switch (b) {
    case DecisionRecord::Branch::Exploit: return "exploit";
    case DecisionRecord::Branch::Explore: return "explore";
    case DecisionRecord::Branch::Fallback: return "fallback";
    }
    return "?";
}

void write_decisions_csv(std::ostream& out, const FacilityConfig& cfg, const std::vector<DecisionRecord>& records) {
    out << "# decisions v1\n";
    out << "timestamp_min,generated,surviving,branch,mu_energy,sigma_energy";
    for (const auto& oc : cfg.observation_constraints) out << ",mu_" << oc.id << ",sigma_" << oc.id;
    for (const auto& d : cfg.action_dims) out << "," << d.name;
    out << "\n";
    char buf[32];
    auto put = [&](double v) {
        std::snprintf(buf, sizeof(buf), "%.10g", v);
        out << "," << buf;
    };
    for (const auto& r : records) {
        out << r.timestamp_min << "," << r.candidates_generated << "," << r.candidates_surviving << ","
            << to_string(r.branch);
        put(r.mu_energy);
        put(r.sigma_energy);
        for (std::size_t k = 0; k < cfg.observation_constraints.size(); ++k) {
            put(k < r.mu_constraints.size() ? r.mu_constraints[k] : 0.0);
            put(k < r.sigma_constraints.size() ? r.sigma_constraints[k] : 0.0);
        }
        for (std::size_t d = 0; d < cfg.action_dims.size(); ++d) {
            if (r.chosen)
                put(r.chosen->values[d]);
            else
                out << ",";
        }
        out << "\n";
    }
}

ActResult act(const PlantState& state, const ActionVector& prev_action, const EnsembleModel& model,
              const FacilityConfig& cfg, const PolicyHParams& hparams, const ChillerHeuristicRules& heuristic_rules,
              ChillerHeuristicState& heuristic_state, const PlantLayout& layout, Rng& rng,
              std::vector<ExplainRow>* explain) {
    ActResult res;
    res.record.timestamp_min = state.timestamp_min;

    const ChillerDecision decision =
        chiller_heuristic(state, layout, heuristic_rules, heuristic_state, state.timestamp_min);
    const ModeSpec* mode = cfg.find_mode(decision.mode);

    CandidateOptions options;
    options.mode = mode;
    const bool mech = decision.mode == ModeName::Mechanical;
    if (heuristic_rules.control_counts) {
        options.pinned.push_back({layout.a_mech_count, mech ? static_cast<double>(decision.count) : 0.0});
        options.pinned.push_back({layout.a_fc_count, mech ? 0.0 : static_cast<double>(decision.count)});
    }
    if (mode) {
        for (std::size_t d = 0; d < cfg.action_dims.size(); ++d) {
            const auto& spec = cfg.action_dims[d];
            if (mode->action_active(spec.name)) continue;
            if (heuristic_rules.control_counts &&
                (static_cast<int>(d) == layout.a_mech_count || static_cast<int>(d) == layout.a_fc_count))
                continue;   // already pinned by the high-level agent
            options.pinned.push_back({static_cast<int>(d), spec.neutral.value_or(prev_action.values[d])});
        }
    }

    const std::vector<ActionVector> candidates = generate_candidates(cfg, prev_action, state, hparams, rng, options);
    res.record.candidates_generated = candidates.size();
    if (candidates.empty()) {
        res.record.branch = DecisionRecord::Branch::Fallback;
        return res;
    }

    const std::vector<EnsemblePrediction> preds = model.predict(state, candidates);
    const std::vector<std::size_t> survivors = filter_candidates(preds, cfg, state, hparams.alpha, mode);
    res.record.candidates_surviving = survivors.size();

    if (hparams.verify_filter) {
        // independent re-scan of the filter inequality over the survivors
        for (std::size_t k = 0; k < cfg.observation_constraints.size(); ++k) {
            const auto& oc = cfg.observation_constraints[k];
            if (mode && !mode->constraint_active(oc.id)) continue;
            const double u = evaluate_bound(cfg, state, oc);
            for (std::size_t si : survivors) {
                const auto& hp = preds[si].constraints[k];
                const double pessimistic =
                    oc.direction == BoundDirection::MaxLe ? hp.mu + hparams.alpha * hp.sigma : hp.mu - hparams.alpha * hp.sigma;
                const bool bad = oc.direction == BoundDirection::MaxLe ? pessimistic > u : pessimistic < u;
                if (bad) ++res.record.filter_rescan_violations;
            }
        }
    }

    if (explain) {
        explain->clear();
        std::vector<bool> survived(candidates.size(), false);
        for (std::size_t si : survivors) survived[si] = true;
        for (std::size_t i = 0; i < candidates.size(); ++i) {
            ExplainRow row;
            row.action = candidates[i];
            row.prediction = preds[i];
            row.survived = survived[i];
            row.exploit_score = -preds[i].energy.mu - hparams.alpha * preds[i].energy.sigma;
            explain->push_back(std::move(row));
        }
    }

    if (survivors.empty()) {
        res.record.branch = DecisionRecord::Branch::Fallback;
        return res;
    }

    std::vector<EnsemblePrediction> surviving_preds;
    surviving_preds.reserve(survivors.size());
    for (std::size_t si : survivors) surviving_preds.push_back(preds[si]);
    const Selection sel =
        select_action(surviving_preds, hparams, model.normalizers().energy.std, rng);

    const std::size_t chosen_idx = survivors[sel.index];
    res.action = candidates[chosen_idx];
    res.record.branch = sel.branch;
    res.record.chosen = candidates[chosen_idx];
    res.record.mu_energy = preds[chosen_idx].energy.mu;
    res.record.sigma_energy = preds[chosen_idx].energy.sigma;
    for (const auto& c : preds[chosen_idx].constraints) {
        res.record.mu_constraints.push_back(c.mu);
        res.record.sigma_constraints.push_back(c.sigma);
    }
    return res;
}

} // namespace chillerlab
