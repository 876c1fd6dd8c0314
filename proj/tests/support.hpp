#pragma once

// Fixtures and independent reference implementations shared by the unit
// tests and the acceptance binary. The oracles deliberately avoid the
// library's own helpers so that agreement is meaningful.

#include "pnr/backends.hpp"
#include "pnr/retrieval.hpp"
#include "pnr/reward.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace pnr::testing {

class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    int uniform_int(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(engine_); }
    double uniform(double lo = 0.0, double hi = 1.0) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }
    double normal() { return std::normal_distribution<double>(0.0, 1.0)(engine_); }
    template <typename T>
    const T& pick(const std::vector<T>& v) {
        return v[static_cast<std::size_t>(uniform_int(0, static_cast<int>(v.size()) - 1))];
    }
    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
};

inline const std::vector<std::string>& toy_vocabulary() {
    static const std::vector<std::string> words = {
        "apple",  "river", "stone",  "cloud", "music", "garden", "window", "bread",  "engine", "forest",
        "silver", "paper", "ladder", "ocean", "candle", "tiger", "pepper", "marble", "rocket", "violin",
    };
    return words;
}

/// n records "d00", "d01", ... of 50 to 80 words drawn from a small
/// vocabulary with a skewed distribution, so BM25 scores vary and ties occur.
inline std::vector<CorpusRecord> toy_records(int n, Rng& rng) {
    const auto& vocab = toy_vocabulary();
    std::vector<CorpusRecord> records;
    for (int i = 0; i < n; ++i) {
        std::ostringstream text;
        int len = rng.uniform_int(50, 80);
        for (int w = 0; w < len; ++w) {
            int limit = rng.uniform_int(0, 1) == 0 ? 5 : static_cast<int>(vocab.size()) - 1;
            text << (w ? " " : "") << vocab[static_cast<std::size_t>(rng.uniform_int(0, limit))];
        }
        char id[16];
        std::snprintf(id, sizeof id, "d%02d", i);
        records.push_back({id, text.str()});
    }
    return records;
}

inline std::string random_query(Rng& rng) {
    std::string q;
    int len = rng.uniform_int(1, 4);
    for (int i = 0; i < len; ++i) q += (i ? " " : "") + rng.pick(toy_vocabulary());
    return q;
}

// ---- oracles ----

/// Lower-cased ASCII alphanumeric runs.
inline std::vector<std::string> oracle_tokens(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : text) {
        if (std::isalnum(static_cast<unsigned char>(c))) {
            cur += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        } else if (!cur.empty()) {
            out.push_back(cur);
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

/// Scores every document from the raw texts with the textbook formula and
/// sorts by (score desc, id asc), dropping zero scores.
inline std::vector<ScoredDoc> oracle_bm25(const std::vector<CorpusRecord>& docs, const std::string& query, int k,
                                          double k1 = 1.2, double b = 0.75) {
    std::vector<std::vector<std::string>> toks;
    double total = 0;
    for (const auto& d : docs) {
        toks.push_back(oracle_tokens(d.text));
        total += static_cast<double>(toks.back().size());
    }
    const double n = static_cast<double>(docs.size());
    const double avgdl = total / n;
    std::vector<std::string> terms;
    std::map<std::string, int> qtf;
    for (const auto& t : oracle_tokens(query)) {
        if (qtf[t]++ == 0) terms.push_back(t);
    }
    std::vector<ScoredDoc> scored;
    for (std::size_t i = 0; i < docs.size(); ++i) {
        double s = 0;
        for (const auto& t : terms) {
            double df = 0;
            for (const auto& dt : toks) df += std::count(dt.begin(), dt.end(), t) > 0 ? 1 : 0;
            double tf = static_cast<double>(std::count(toks[i].begin(), toks[i].end(), t));
            if (tf == 0) continue;
            double idf = std::log(1.0 + (n - df + 0.5) / (df + 0.5));
            double len = static_cast<double>(toks[i].size());
            s += qtf[t] * idf * tf * (k1 + 1) / (tf + k1 * (1 - b + b * len / avgdl));
        }
        if (s > 0) scored.push_back({docs[i].id, s});
    }
    std::sort(scored.begin(), scored.end(), [](const ScoredDoc& x, const ScoredDoc& y) {
        return x.score != y.score ? x.score > y.score : x.id < y.id;
    });
    if (scored.size() > static_cast<std::size_t>(k)) scored.resize(static_cast<std::size_t>(k));
    return scored;
}

/// Deals k documents round-robin over the steps.
inline std::vector<int> oracle_allocation(int k, int steps) {
    std::vector<int> counts(static_cast<std::size_t>(steps), 0);
    for (int i = 0; i < k; ++i) ++counts[static_cast<std::size_t>(i % steps)];
    return counts;
}

/// Nearest-rank percentile by counting: the smallest score v such that at
/// least z% of the scores are <= v.
inline double oracle_percentile(const std::vector<double>& scores, double z) {
    std::vector<double> sorted = scores;
    std::sort(sorted.begin(), sorted.end());
    const double n = static_cast<double>(sorted.size());
    for (double v : sorted) {
        double at_most = static_cast<double>(std::count_if(sorted.begin(), sorted.end(), [&](double s) { return s <= v; }));
        // at_most / n >= z / 100, compared in integers where possible
        if (at_most * 100.0 >= z * n - 1e-9) return v;
    }
    return sorted.back();
}

/// Cosine of term-frequency vectors.
inline double oracle_cosine(const std::string& a, const std::string& b) {
    std::map<std::string, double> fa, fb;
    for (const auto& t : oracle_tokens(a)) fa[t] += 1;
    for (const auto& t : oracle_tokens(b)) fb[t] += 1;
    double dot = 0, na = 0, nb = 0;
    for (const auto& [t, v] : fa) {
        na += v * v;
        auto it = fb.find(t);
        if (it != fb.end()) dot += v * it->second;
    }
    for (const auto& [t, v] : fb) nb += v * v;
    return na == 0 || nb == 0 ? 0.0 : dot / std::sqrt(na * nb);
}

/// Scores every candidate on its own and keeps the first strict maximum.
inline std::size_t oracle_select(const RewardHead& head, const CandidatePool& pool, const std::string& query,
                                 EmbeddingBackend& embedder) {
    std::size_t best = 0;
    double best_score = -1;
    for (std::size_t i = 0; i < pool.size(); ++i) {
        auto e = embedder.embed(query + head.separator + pool.candidates[i].text);
        double z = 0;
        for (Eigen::Index j = 0; j < e.size(); ++j) z += e[j] * head.weights[j];
        double s = 1.0 / (1.0 + std::exp(-z));
        if (s > best_score) {
            best_score = s;
            best = i;
        }
    }
    return best;
}

/// Central finite differences of mean_pairwise_loss in long double.
inline Eigen::VectorXd finite_difference_gradient(const Eigen::VectorXd& w, const Eigen::MatrixXd& better,
                                                  const Eigen::MatrixXd& worse, LossSpace space,
                                                  long double h = 1e-6L) {
    using LVec = Eigen::Matrix<long double, Eigen::Dynamic, 1>;
    using LMat = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;
    LMat b = better.cast<long double>();
    LMat l = worse.cast<long double>();
    Eigen::VectorXd grad(w.size());
    for (Eigen::Index i = 0; i < w.size(); ++i) {
        LVec up = w.cast<long double>(), down = w.cast<long double>();
        up[i] += h;
        down[i] -= h;
        long double f_up = mean_pairwise_loss(up, b, l, space);
        long double f_down = mean_pairwise_loss(down, b, l, space);
        grad[i] = static_cast<double>((f_up - f_down) / (2 * h));
    }
    return grad;
}

/// Pairs whose difference is a fixed margin along a planted unit direction
/// plus small isotropic noise.
struct PlantedPairs {
    Eigen::VectorXd direction;
    Eigen::MatrixXd better;
    Eigen::MatrixXd worse;
};

inline PlantedPairs planted_pairs(int n, int d, Rng& rng, double margin = 1.0, double noise = 0.1) {
    PlantedPairs p;
    p.direction = Eigen::VectorXd(d);
    for (int j = 0; j < d; ++j) p.direction[j] = rng.normal();
    p.direction.normalize();
    p.worse = Eigen::MatrixXd(n, d);
    p.better = Eigen::MatrixXd(n, d);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < d; ++j) p.worse(i, j) = rng.normal();
        Eigen::VectorXd eps(d);
        for (int j = 0; j < d; ++j) eps[j] = noise * rng.normal();
        p.better.row(i) = p.worse.row(i) + (margin * p.direction + eps).transpose();
    }
    return p;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static int counter = 0;
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() /
                ("pnr-" + tag + "-" + std::to_string(rd()) + "-" + std::to_string(counter++));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::string file(const std::string& name) const { return (path_ / name).string(); }

private:
    std::filesystem::path path_;
};

inline std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

inline void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
}

/// Topic corpus and questions the simulated backend can answer sensibly.
inline const std::vector<std::pair<std::string, std::string>>& topic_words() {
    static const std::vector<std::pair<std::string, std::string>> topics = {
        {"coffee", "coffee beans roast caffeine brewing espresso acidity aroma grinder crema"},
        {"sleep", "sleep rest circadian melatonin insomnia dreams night bedtime nap pillow"},
        {"dogs", "dogs puppies training breed leash barking walk loyalty kennel treats"},
        {"solar", "solar panels energy sunlight inverter battery roof electricity grid watt"},
        {"bread", "bread flour yeast dough oven crust knead rise bakery sourdough"},
    };
    return topics;
}

inline std::vector<CorpusRecord> topic_records(int docs_per_topic, Rng& rng) {
    static const std::vector<std::string> filler = {"the", "of", "and", "a", "to", "in", "is", "that", "it", "for"};
    std::vector<CorpusRecord> records;
    for (const auto& [topic, words] : topic_words()) {
        std::vector<std::string> vocab;
        std::istringstream ws(words);
        for (std::string w; ws >> w;) vocab.push_back(w);
        for (int j = 0; j < docs_per_topic; ++j) {
            std::string text;
            for (int s = 0; s < 8; ++s) {
                std::string sentence;
                for (int w = 0; w < 9; ++w) {
                    sentence += (w ? " " : "") + (rng.uniform_int(0, 2) == 0 ? rng.pick(filler) : rng.pick(vocab));
                }
                sentence[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(sentence[0])));
                text += (s ? " " : "") + sentence + ".";
            }
            records.push_back({topic + "-" + std::to_string(j), text});
        }
    }
    return records;
}

/// n questions cycling over the topics with varying wording.
inline std::vector<std::string> topic_questions(int n) {
    static const std::vector<std::string> frames = {
        "how does {a} affect {b}",
        "why is {a} related to {b}",
        "what should I know about {a} and {b}",
        "is {a} better with {b}",
        "explain {a} {b} basics",
    };
    std::vector<std::string> out;
    for (int i = 0; i < n; ++i) {
        const auto& [topic, words] = topic_words()[static_cast<std::size_t>(i) % topic_words().size()];
        std::vector<std::string> vocab;
        std::istringstream ws(words);
        for (std::string w; ws >> w;) vocab.push_back(w);
        std::string q = frames[static_cast<std::size_t>(i / 5) % frames.size()];
        auto a = vocab[static_cast<std::size_t>(i / 5 + 1) % vocab.size()];
        auto b = vocab[static_cast<std::size_t>(i / 5 + 4) % vocab.size()];
        q.replace(q.find("{a}"), 3, a);
        q.replace(q.find("{b}"), 3, b);
        out.push_back(q);
    }
    return out;
}

}  // namespace pnr::testing
