#include "pnr/reward.hpp"

#include "pnr/error.hpp"
#include "pnr/text.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>

namespace pnr {

const char* to_string(LossSpace space) noexcept {
    return space == LossSpace::probability ? "probability" : "logit";
}

LossSpace loss_space_from_string(std::string_view name) {
    if (name == "probability") return LossSpace::probability;
    if (name == "logit") return LossSpace::logit;
    throw ConfigError("unknown loss space: " + std::string(name));
}

RewardHead RewardHead::zeros(Eigen::Index dimension) {
    if (dimension < 1) throw PreconditionError("reward head dimension must be positive");
    RewardHead head;
    head.weights = Eigen::VectorXd::Zero(dimension);
    return head;
}

std::string join_for_reward(std::string_view query, std::string_view response, std::string_view separator) {
    std::string joined;
    joined.reserve(query.size() + separator.size() + response.size());
    joined += query;
    joined += separator;
    joined += response;
    return joined;
}

double reward_logit(const RewardHead& head, const EmbeddingVector& embedding) {
    if (embedding.size() != head.dimension()) {
        throw PreconditionError("reward head dimension " + std::to_string(head.dimension()) +
                                " does not match embedding dimension " + std::to_string(embedding.size()));
    }
    return embedding.dot(head.weights);
}

double score(const RewardHead& head, std::string_view query, std::string_view response, EmbeddingBackend& embedder) {
    if (embedder.dimension() != 0 && embedder.dimension() != head.dimension()) {
        throw PreconditionError("reward head dimension " + std::to_string(head.dimension()) +
                                " does not match backend dimension " + std::to_string(embedder.dimension()));
    }
    return sigmoid(reward_logit(head, embedder.embed(join_for_reward(query, response, head.separator))));
}

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0)) throw PreconditionError("learning rate must be positive");
    if (epochs < 1) throw PreconditionError("epochs must be at least 1");
    if (batch_size < 1) throw PreconditionError("batch size must be at least 1");
    if (!(holdout_fraction >= 0.0 && holdout_fraction < 1.0)) {
        throw PreconditionError("holdout fraction must lie in [0, 1)");
    }
}

EmbeddedPairs embed_pairs(const std::vector<RewardPair>& pairs, EmbeddingBackend& embedder,
                          std::string_view separator) {
    if (pairs.empty()) throw PreconditionError("no reward pairs");
    EmbeddedPairs data;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        EmbeddingVector b = embedder.embed(join_for_reward(pairs[i].query, pairs[i].better, separator));
        EmbeddingVector w = embedder.embed(join_for_reward(pairs[i].query, pairs[i].worse, separator));
        if (i == 0) {
            data.better.resize(static_cast<Eigen::Index>(pairs.size()), b.size());
            data.worse.resize(static_cast<Eigen::Index>(pairs.size()), b.size());
        }
        if (b.size() != data.better.cols() || w.size() != data.better.cols()) {
            throw PreconditionError("inconsistent embedding dimension across reward pairs");
        }
        data.better.row(static_cast<Eigen::Index>(i)) = b.transpose();
        data.worse.row(static_cast<Eigen::Index>(i)) = w.transpose();
    }
    return data;
}

namespace {

Eigen::MatrixXd take_rows(const Eigen::MatrixXd& m, const std::vector<Eigen::Index>& rows) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), m.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(rows[i]);
    return out;
}

}  // namespace

double pair_accuracy(const RewardHead& head, const Eigen::MatrixXd& better, const Eigen::MatrixXd& worse) {
    if (better.rows() == 0) return 0.0;
    Eigen::VectorXd zb = better * head.weights;
    Eigen::VectorXd zw = worse * head.weights;
    Eigen::Index correct = 0;
    for (Eigen::Index i = 0; i < zb.size(); ++i) {
        if (sigmoid(zb[i]) > sigmoid(zw[i])) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(zb.size());
}

TrainReport train_head(const EmbeddedPairs& data, const TrainConfig& config) {
    config.validate();
    const Eigen::Index n = data.better.rows();
    if (n == 0) throw PreconditionError("no reward pairs");
    if (data.worse.rows() != n || data.worse.cols() != data.better.cols()) {
        throw PreconditionError("better/worse embedding matrices disagree in shape");
    }

    std::mt19937_64 rng(config.seed);
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::shuffle(order.begin(), order.end(), rng);
    auto holdout = static_cast<std::size_t>(static_cast<double>(n) * config.holdout_fraction);
    holdout = std::min(holdout, order.size() - 1);
    std::vector<Eigen::Index> held(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(holdout));
    std::vector<Eigen::Index> train(order.begin() + static_cast<std::ptrdiff_t>(holdout), order.end());
    std::sort(held.begin(), held.end());
    std::sort(train.begin(), train.end());

    Eigen::MatrixXd tb = take_rows(data.better, train);
    Eigen::MatrixXd tw = take_rows(data.worse, train);

    TrainReport report;
    report.head = RewardHead::zeros(data.better.cols());
    report.head.separator = config.separator;
    report.head.loss_space = config.loss_space;
    report.train_pairs = train.size();
    report.holdout_pairs = held.size();
    auto& w = report.head.weights;
    report.initial_loss = mean_pairwise_loss(w, tb, tw, config.loss_space);

    std::vector<Eigen::Index> batch_order(train.size());
    std::iota(batch_order.begin(), batch_order.end(), Eigen::Index{0});
    const auto batch = static_cast<std::size_t>(config.batch_size);
    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        std::shuffle(batch_order.begin(), batch_order.end(), rng);
        for (std::size_t start = 0; start < batch_order.size(); start += batch) {
            std::vector<Eigen::Index> rows(batch_order.begin() + static_cast<std::ptrdiff_t>(start),
                                           batch_order.begin() +
                                               static_cast<std::ptrdiff_t>(std::min(start + batch, batch_order.size())));
            Eigen::MatrixXd bb = take_rows(tb, rows);
            Eigen::MatrixXd bw = take_rows(tw, rows);
            w -= config.learning_rate * mean_pairwise_loss_gradient(w, bb, bw, config.loss_space);
        }
        double loss = mean_pairwise_loss(w, tb, tw, config.loss_space);
        if (!std::isfinite(loss) || !w.allFinite()) {
            throw TrainingDiverged("reward training diverged at epoch " + std::to_string(epoch), epoch);
        }
        report.epoch_losses.push_back(loss);
    }
    report.final_loss = report.epoch_losses.back();
    report.head.trained = true;
    if (!held.empty()) {
        report.holdout_accuracy = pair_accuracy(report.head, take_rows(data.better, held), take_rows(data.worse, held));
    }
    return report;
}

TrainReport train_head(const std::vector<RewardPair>& pairs, EmbeddingBackend& embedder, const TrainConfig& config) {
    config.validate();
    return train_head(embed_pairs(pairs, embedder, config.separator), config);
}

std::size_t argmax_first(const std::vector<double>& scores) {
    if (scores.empty()) throw PreconditionError("argmax of an empty list");
    std::size_t best = 0;
    for (std::size_t i = 1; i < scores.size(); ++i) {
        if (scores[i] > scores[best]) best = i;
    }
    return best;
}

Selection select_best(const RewardHead& head, const CandidatePool& pool, std::string_view query,
                      EmbeddingBackend& embedder) {
    if (pool.empty()) throw PreconditionError("cannot select from an empty pool");
    Selection sel;
    sel.scores.reserve(pool.size());
    for (const auto& c : pool.candidates) sel.scores.push_back(score(head, query, c.text, embedder));
    sel.index = argmax_first(sel.scores);
    return sel;
}

namespace {

constexpr const char* kHeadMagic = "pnr-reward-head 1";

std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

std::string expect_line(std::istream& in, std::string_view key) {
    std::string line;
    if (!std::getline(in, line)) throw FormatError("reward head truncated before '" + std::string(key) + "'");
    if (line.rfind(key, 0) != 0 || line.size() <= key.size() || line[key.size()] != ' ') {
        throw FormatError("reward head: expected '" + std::string(key) + "', got '" + line + "'");
    }
    return line.substr(key.size() + 1);
}

}  // namespace

void save_head(const RewardHead& head, std::ostream& out) {
    out << kHeadMagic << '\n';
    out << "dimension " << head.dimension() << '\n';
    out << "loss_space " << to_string(head.loss_space) << '\n';
    out << "trained " << (head.trained ? 1 : 0) << '\n';
    out << "separator " << nlohmann::json(head.separator).dump() << '\n';
    for (Eigen::Index i = 0; i < head.weights.size(); ++i) out << format_double(head.weights[i]) << '\n';
}

RewardHead load_head(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line != kHeadMagic) throw FormatError("not a pnr reward head file");
    RewardHead head;
    auto dim_text = expect_line(in, "dimension");
    Eigen::Index dim = 0;
    auto [p, ec] = std::from_chars(dim_text.data(), dim_text.data() + dim_text.size(), dim);
    if (ec != std::errc{} || p != dim_text.data() + dim_text.size() || dim < 1) {
        throw FormatError("reward head: bad dimension '" + dim_text + "'");
    }
    head.loss_space = loss_space_from_string(expect_line(in, "loss_space"));
    head.trained = expect_line(in, "trained") == "1";
    auto sep = nlohmann::json::parse(expect_line(in, "separator"), nullptr, false);
    if (!sep.is_string()) throw FormatError("reward head: separator is not a JSON string");
    head.separator = sep.get<std::string>();
    head.weights.resize(dim);
    for (Eigen::Index i = 0; i < dim; ++i) {
        if (!std::getline(in, line)) throw FormatError("reward head truncated in weights");
        double v = 0.0;
        auto [q, err] = std::from_chars(line.data(), line.data() + line.size(), v);
        if (err != std::errc{} || q != line.data() + line.size() || !std::isfinite(v)) {
            throw FormatError("reward head: bad weight '" + line + "'");
        }
        head.weights[i] = v;
    }
    return head;
}

}  // namespace pnr
