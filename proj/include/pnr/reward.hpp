#pragma once

// Reward head: score(x, o) = sigmoid(<embed(x ++ sep ++ o), W>) over a frozen
// embedding backend, trained with the pairwise loss -log sigmoid(s1 - s0).
//
// The loss and its gradient are templated on the scalar type so that tests
// can evaluate the same expressions in long double as a reference.

#include "pnr/backends.hpp"
#include "pnr/candidate.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace pnr {

inline constexpr const char* kDefaultSeparator = "\n[SEP]\n";

/// Which quantities the pairwise loss subtracts: the sigmoid scores
/// (probability) or the pre-sigmoid logits (logit).
enum class LossSpace { probability, logit };

const char* to_string(LossSpace space) noexcept;
LossSpace loss_space_from_string(std::string_view name);

template <typename Scalar>
Scalar sigmoid(Scalar x) {
    using std::exp;
    if (x >= Scalar(0)) return Scalar(1) / (Scalar(1) + exp(-x));
    Scalar e = exp(x);
    return e / (Scalar(1) + e);
}

/// log(1 + exp(x)) without overflow.
template <typename Scalar>
Scalar softplus(Scalar x) {
    using std::exp;
    using std::log1p;
    return x > Scalar(0) ? x + log1p(exp(-x)) : log1p(exp(x));
}

/// -log sigmoid(better - worse).
template <typename Scalar>
Scalar pairwise_loss(Scalar better, Scalar worse) {
    return softplus(worse - better);
}

namespace detail {

template <typename DerivedW, typename DerivedE>
auto pair_terms(const Eigen::MatrixBase<DerivedW>& w, const Eigen::MatrixBase<DerivedE>& rows, LossSpace space) {
    using Scalar = typename DerivedW::Scalar;
    using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
    Vec z = rows * w;
    Vec value = space == LossSpace::probability ? Vec(z.unaryExpr([](Scalar v) { return sigmoid(v); })) : z;
    Vec slope = space == LossSpace::probability ? Vec(value.unaryExpr([](Scalar s) { return s * (Scalar(1) - s); }))
                                                : Vec::Ones(z.size());
    return std::pair{value, slope};
}

}  // namespace detail

/// Mean pairwise loss over pairs whose embeddings are the rows of `better`
/// and `worse`.
template <typename DerivedW, typename DerivedB, typename DerivedL>
typename DerivedW::Scalar mean_pairwise_loss(const Eigen::MatrixBase<DerivedW>& w,
                                             const Eigen::MatrixBase<DerivedB>& better,
                                             const Eigen::MatrixBase<DerivedL>& worse, LossSpace space) {
    using Scalar = typename DerivedW::Scalar;
    auto vb = detail::pair_terms(w, better, space).first;
    auto vw = detail::pair_terms(w, worse, space).first;
    Scalar total(0);
    for (Eigen::Index i = 0; i < vb.size(); ++i) total += pairwise_loss(vb[i], vw[i]);
    return total / Scalar(vb.size());
}

/// Analytic gradient of mean_pairwise_loss with respect to w.
template <typename DerivedW, typename DerivedB, typename DerivedL>
Eigen::Matrix<typename DerivedW::Scalar, Eigen::Dynamic, 1> mean_pairwise_loss_gradient(
    const Eigen::MatrixBase<DerivedW>& w, const Eigen::MatrixBase<DerivedB>& better,
    const Eigen::MatrixBase<DerivedL>& worse, LossSpace space) {
    using Scalar = typename DerivedW::Scalar;
    using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
    auto [vb, sb] = detail::pair_terms(w, better, space);
    auto [vw, sw] = detail::pair_terms(w, worse, space);
    // d/d(diff) of softplus(-diff) is -sigmoid(-diff).
    Vec coef = (vb - vw).unaryExpr([](Scalar d) { return -sigmoid(-d); });
    Vec grad = better.transpose() * coef.cwiseProduct(sb) - worse.transpose() * coef.cwiseProduct(sw);
    return grad / Scalar(vb.size());
}

struct RewardHead {
    Eigen::VectorXd weights;
    std::string separator = kDefaultSeparator;
    bool trained = false;
    LossSpace loss_space = LossSpace::probability;

    static RewardHead zeros(Eigen::Index dimension);
    Eigen::Index dimension() const noexcept { return weights.size(); }
};

std::string join_for_reward(std::string_view query, std::string_view response, std::string_view separator);

/// <embedding, W>. Throws PreconditionError on a dimension mismatch.
double reward_logit(const RewardHead& head, const EmbeddingVector& embedding);

/// sigmoid(reward_logit(head, embed(query ++ separator ++ response))).
double score(const RewardHead& head, std::string_view query, std::string_view response, EmbeddingBackend& embedder);

struct RewardPair {
    std::string query;
    std::string worse;
    std::string better;
    double gap = 0.0;
};

struct TrainConfig {
    double learning_rate = 1e-2;
    int epochs = 200;
    int batch_size = 16;
    std::uint64_t seed = 0;
    double holdout_fraction = 0.2;
    LossSpace loss_space = LossSpace::probability;
    std::string separator = kDefaultSeparator;

    void validate() const;
};

struct TrainReport {
    RewardHead head;
    double initial_loss = 0.0;
    double final_loss = 0.0;
    std::vector<double> epoch_losses;
    std::size_t train_pairs = 0;
    std::size_t holdout_pairs = 0;
    /// Fraction of held-out pairs the trained head orders correctly; unset
    /// when the holdout split is empty.
    std::optional<double> holdout_accuracy;
};

/// Embeddings of the joined (query, response) texts, one row per pair.
struct EmbeddedPairs {
    Eigen::MatrixXd better;
    Eigen::MatrixXd worse;
};

EmbeddedPairs embed_pairs(const std::vector<RewardPair>& pairs, EmbeddingBackend& embedder,
                          std::string_view separator);

/// Mini-batch gradient descent on W from zero. Embeddings are computed once;
/// the backend is only read. Throws TrainingDiverged on a non-finite loss.
TrainReport train_head(const std::vector<RewardPair>& pairs, EmbeddingBackend& embedder, const TrainConfig& config);

/// Same as train_head on precomputed embeddings.
TrainReport train_head(const EmbeddedPairs& data, const TrainConfig& config);

/// Fraction of pairs with score(better) > score(worse).
double pair_accuracy(const RewardHead& head, const Eigen::MatrixXd& better, const Eigen::MatrixXd& worse);

struct Selection {
    std::size_t index = 0;
    std::vector<double> scores;  // one per pool candidate
};

/// Highest-scoring candidate; ties go to the earliest pool position.
/// Throws PreconditionError on an empty pool.
Selection select_best(const RewardHead& head, const CandidatePool& pool, std::string_view query,
                      EmbeddingBackend& embedder);

/// Index of the first maximum.
std::size_t argmax_first(const std::vector<double>& scores);

/// Versioned text format: magic line, dimension, loss space, trained flag,
/// JSON-quoted separator, then one shortest-round-trip weight per line.
void save_head(const RewardHead& head, std::ostream& out);
RewardHead load_head(std::istream& in);

}  // namespace pnr
