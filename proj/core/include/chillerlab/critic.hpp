#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "chillerlab/dataset.hpp"
#include "chillerlab/mlp.hpp"
#include "chillerlab/plant_state.hpp"

namespace chillerlab {

struct CriticHParams {
    int ensemble_size = 10;
    int shared_hidden_layers = 1;
    int per_head_hidden_layers = 2;
    int units_per_layer = 128;
    double learning_rate = 0.001;
    int epochs = 200;
    int batch_size = 256;
    std::uint64_t weight_seed = 17;             // base of the member seed list
    std::vector<std::uint64_t> member_seeds;    // derived from weight_seed when empty
    int num_threads = 2;

    std::vector<std::uint64_t> resolved_seeds() const;
};

struct HeadPrediction {
    double mu = 0.0;      // ensemble mean, denormalized units
    double sigma = 0.0;   // ensemble standard deviation, same units
};

struct EnsemblePrediction {
    HeadPrediction energy;
    std::vector<HeadPrediction> constraints;   // config order
};

// Per-feature standardization applied inside the model (stored in the
// checkpoint); targets use the z-score normalizers from the dataset module.
struct FeatureScaler {
    std::vector<double> mean;
    std::vector<double> std;
};

class EnsembleModel {
public:
    EnsembleModel() = default;

    const CriticHParams& hparams() const { return hparams_; }
    const std::vector<FeatureMask>& masks() const { return masks_; }
    const std::vector<std::string>& feature_names() const { return feature_names_; }
    const std::vector<std::string>& target_names() const { return target_names_; }
    const TargetNormalizers& normalizers() const { return normalizers_; }
    const NetArch& arch() const { return arch_; }
    const std::vector<MemberNetF>& members() const { return members_; }
    const std::vector<double>& final_member_losses() const { return final_member_losses_; }

    std::size_t parameter_count() const;

    // Batch prediction over full feature rows (sensors then actions).
    std::vector<EnsemblePrediction> predict_features(const std::vector<std::vector<double>>& rows) const;

    // Attaches the current observation to each candidate action.
    std::vector<EnsemblePrediction> predict(const PlantState& state, const std::vector<ActionVector>& actions) const;

    void save(const std::string& path) const;
    static EnsembleModel load(const std::string& path);

    friend EnsembleModel train(const std::vector<TrainingExample>& examples, const std::vector<FeatureMask>& masks,
                               const CriticHParams& hparams, const FacilityConfig& cfg);

private:
    CriticHParams hparams_;
    std::vector<FeatureMask> masks_;
    std::vector<std::string> feature_names_;
    std::vector<std::string> target_names_;
    TargetNormalizers normalizers_;
    FeatureScaler scaler_;
    NetArch arch_;
    std::vector<MemberNetF> members_;
    std::vector<double> final_member_losses_;
};

// Trains ensemble_size members independently (own init seed, own data order)
// on z-scored targets with the summed per-head MSE loss. Throws on non-finite
// loss.
EnsembleModel train(const std::vector<TrainingExample>& examples, const std::vector<FeatureMask>& masks,
                    const CriticHParams& hparams, const FacilityConfig& cfg);

// Analytic-vs-central-difference gradient verification on a double-precision
// member.
struct GradientCheckResult {
    double max_rel_error = 0.0;
    std::size_t params_checked = 0;
};

GradientCheckResult gradient_check(MemberNetD& net, const MatX<double>& X, const MatX<double>& Y,
                                   double step = 1e-5);

// mu(anchor + delta) - mu(anchor) for each delta, per head. Deltas must land
// on the dim's grid.
std::vector<std::vector<double>> sensitivity(const EnsembleModel& model, const FacilityConfig& cfg,
                                             const PlantState& anchor_state, const ActionVector& anchor_action,
                                             int action_dim, const std::vector<double>& deltas);

// Variance-based importance: how much predictions move when one feature is
// resampled from its empirical marginal with everything else fixed.
std::vector<double> feature_importance(const EnsembleModel& model, const std::vector<TrainingExample>& examples,
                                       int n_anchors = 64, int n_resamples = 32, std::uint64_t seed = 99);

} // namespace chillerlab
