#include "pnr/retrieval.hpp"

#include "pnr/error.hpp"
#include "pnr/text.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <unordered_set>

namespace pnr {

const Document* Corpus::find(std::string_view id) const {
    auto it = by_id_.find(std::string(id));
    return it == by_id_.end() ? nullptr : &documents_[it->second];
}

Corpus ingest_corpus(std::span<const CorpusRecord> records, std::size_t min_words) {
    Corpus corpus;
    corpus.min_words_ = min_words;
    corpus.records_seen_ = records.size();
    std::unordered_set<std::string_view> seen;
    for (const auto& r : records) {
        if (!seen.insert(r.id).second) throw PreconditionError("duplicate document id: " + r.id);
        auto words = whitespace_word_count(r.text);
        if (words < min_words) continue;
        corpus.by_id_.emplace(r.id, corpus.documents_.size());
        corpus.documents_.push_back({r.id, r.text, words});
    }
    return corpus;
}

std::vector<CorpusRecord> read_corpus_jsonl(std::istream& in) {
    std::vector<CorpusRecord> records;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        auto doc = nlohmann::json::parse(line, nullptr, false);
        auto where = "corpus line " + std::to_string(line_no);
        if (doc.is_discarded() || !doc.is_object()) throw FormatError(where + ": not a JSON object");
        if (!doc.contains("id") || !(doc["id"].is_string() || doc["id"].is_number_integer()))
            throw FormatError(where + ": missing \"id\"");
        if (!doc.contains("text") || !doc["text"].is_string()) throw FormatError(where + ": missing string \"text\"");
        const auto& id = doc["id"];
        records.push_back({id.is_string() ? id.get<std::string>() : id.dump(), doc["text"].get<std::string>()});
    }
    return records;
}

namespace {

bool ranks_before(const ScoredDoc& a, const ScoredDoc& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.id < b.id;
}

// Distinct query terms in first-occurrence order with their counts.
std::vector<std::pair<std::string, int>> query_terms(std::string_view query) {
    std::vector<std::pair<std::string, int>> terms;
    for (auto& t : tokenize(query)) {
        auto it = std::find_if(terms.begin(), terms.end(), [&](const auto& p) { return p.first == t; });
        if (it == terms.end()) {
            terms.emplace_back(std::move(t), 1);
        } else {
            ++it->second;
        }
    }
    return terms;
}

std::vector<ScoredDoc> top_k(std::vector<ScoredDoc> hits, int k) {
    auto keep = std::min<std::size_t>(hits.size(), static_cast<std::size_t>(k));
    std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(keep), hits.end(), ranks_before);
    hits.resize(keep);
    return hits;
}

}  // namespace

Index build_index(Corpus corpus, Bm25Params params) {
    if (corpus.empty()) throw PreconditionError("cannot index an empty corpus");
    Index index;
    index.params_ = params;
    const auto& docs = corpus.documents();
    index.doc_lengths_.reserve(docs.size());
    double total = 0.0;
    for (std::size_t d = 0; d < docs.size(); ++d) {
        std::map<std::string, std::uint32_t> tf;
        auto tokens = tokenize(docs[d].body);
        for (auto& t : tokens) ++tf[std::move(t)];
        for (auto& [term, count] : tf) {
            index.postings_[term].push_back({static_cast<std::uint32_t>(d), count});
        }
        index.doc_lengths_.push_back(static_cast<std::uint32_t>(tokens.size()));
        total += static_cast<double>(tokens.size());
    }
    index.avg_doc_length_ = total / static_cast<double>(docs.size());
    // A corpus of punctuation-only documents has no tokens at all.
    if (index.avg_doc_length_ <= 0.0) index.avg_doc_length_ = 1.0;
    index.corpus_ = std::move(corpus);
    return index;
}

std::span<const Posting> Index::postings(std::string_view term) const {
    auto it = postings_.find(std::string(term));
    if (it == postings_.end()) return {};
    return it->second;
}

std::vector<std::string> Index::terms() const {
    std::vector<std::string> out;
    out.reserve(postings_.size());
    for (const auto& [term, _] : postings_) out.push_back(term);
    std::sort(out.begin(), out.end());
    return out;
}

double Index::idf(std::string_view term) const {
    auto df = static_cast<double>(postings(term).size());
    auto n = static_cast<double>(corpus_.size());
    return std::log(1.0 + (n - df + 0.5) / (df + 0.5));
}

std::vector<double> Index::score_all(std::string_view query) const {
    std::vector<double> scores(corpus_.size(), 0.0);
    const double k1 = params_.k1;
    const double b = params_.b;
    for (const auto& [term, qtf] : query_terms(query)) {
        auto list = postings(term);
        if (list.empty()) continue;
        const double w = qtf * idf(term);
        for (const auto& p : list) {
            const double tf = p.tf;
            const double norm = 1.0 - b + b * doc_lengths_[p.doc] / avg_doc_length_;
            scores[p.doc] += w * (tf * (k1 + 1.0) / (tf + k1 * norm));
        }
    }
    return scores;
}

std::vector<ScoredDoc> Index::retrieve(std::string_view query, int k) const {
    if (k < 1) throw PreconditionError("retrieve needs k >= 1");
    auto scores = score_all(query);
    std::vector<ScoredDoc> hits;
    const auto& docs = corpus_.documents();
    for (std::size_t d = 0; d < scores.size(); ++d) {
        if (scores[d] > 0.0) hits.push_back({docs[d].id, scores[d]});
    }
    return top_k(std::move(hits), k);
}

const Document& Index::document(std::string_view id) const {
    const auto* doc = corpus_.find(id);
    if (doc == nullptr) throw PreconditionError("unknown document id: " + std::string(id));
    return *doc;
}

std::vector<ScoredDoc> retrieve(const Retriever& retriever, std::string_view query, int k) {
    if (k < 1) throw PreconditionError("retrieve needs k >= 1");
    return retriever.retrieve(query, k);
}

std::vector<int> allocate_budget(int k, int step_count) {
    if (k < 1 || step_count < 1) throw PreconditionError("allocate_budget needs k >= 1 and step_count >= 1");
    std::vector<int> counts(static_cast<std::size_t>(step_count), k / step_count);
    for (int i = 0; i < k % step_count; ++i) ++counts[static_cast<std::size_t>(i)];
    return counts;
}

RetrievedContext assemble_context(const Plan& plan, const Retriever& retriever, int k) {
    if (plan.steps.empty()) throw PreconditionError("assemble_context needs a nonempty plan");
    auto counts = allocate_budget(k, static_cast<int>(plan.steps.size()));
    RetrievedContext ctx;
    ctx.budget = k;
    std::unordered_set<std::string> taken;
    for (std::size_t step = 0; step < plan.steps.size(); ++step) {
        if (counts[step] == 0) continue;
        for (auto& hit : retriever.retrieve(plan.steps[step].query, counts[step])) {
            if (taken.insert(hit.id).second) {
                ctx.docs.push_back({std::move(hit.id), static_cast<int>(step), hit.score});
            }
        }
    }
    return ctx;
}

namespace {

using TermCounts = std::map<std::string, double>;

TermCounts term_counts(std::string_view text) {
    TermCounts tf;
    for (auto& t : tokenize(text)) tf[std::move(t)] += 1.0;
    return tf;
}

double cosine(const TermCounts& a, const TermCounts& b) {
    double dot = 0.0;
    double na = 0.0;
    double nb = 0.0;
    for (const auto& [t, c] : a) {
        na += c * c;
        if (auto it = b.find(t); it != b.end()) dot += c * it->second;
    }
    for (const auto& [_, c] : b) nb += c * c;
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace

double tf_cosine(std::string_view a, std::string_view b) { return cosine(term_counts(a), term_counts(b)); }

std::vector<std::string> mmr_rerank(const Index& index, std::string_view query, int pool_size, double lambda, int m) {
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw PreconditionError("MMR lambda must lie in [0, 1]");
    if (pool_size < 1 || m < 0 || m > pool_size) throw PreconditionError("MMR needs 0 <= m <= pool_size");
    auto pool = index.retrieve(query, pool_size);
    if (pool.empty() || m == 0) return {};
    const double top = pool.front().score;

    std::vector<TermCounts> vectors;
    vectors.reserve(pool.size());
    for (const auto& hit : pool) vectors.push_back(term_counts(index.document(hit.id).body));

    // Running max similarity of each pool entry to the selected set.
    std::vector<double> max_sim(pool.size(), 0.0);
    std::vector<bool> chosen(pool.size(), false);
    std::vector<std::string> out;
    const auto want = std::min<std::size_t>(static_cast<std::size_t>(m), pool.size());
    while (out.size() < want) {
        std::size_t best = pool.size();
        double best_value = 0.0;
        for (std::size_t i = 0; i < pool.size(); ++i) {
            if (chosen[i]) continue;
            double value = lambda * (pool[i].score / top) - (1.0 - lambda) * max_sim[i];
            if (best == pool.size() || value > best_value) {
                best = i;
                best_value = value;
            }
        }
        chosen[best] = true;
        out.push_back(pool[best].id);
        for (std::size_t i = 0; i < pool.size(); ++i) {
            if (!chosen[i]) max_sim[i] = std::max(max_sim[i], cosine(vectors[i], vectors[best]));
        }
    }
    return out;
}

DenseRetriever::DenseRetriever(const Corpus& corpus, EmbeddingBackend& embedder)
    : corpus_(corpus), embedder_(embedder) {
    if (corpus.empty()) throw PreconditionError("cannot build a dense retriever over an empty corpus");
    const auto& docs = corpus.documents();
    for (std::size_t d = 0; d < docs.size(); ++d) {
        EmbeddingVector v = embedder_.embed(docs[d].body);
        if (d == 0) doc_vectors_.resize(static_cast<Eigen::Index>(docs.size()), v.size());
        if (v.size() != doc_vectors_.cols()) throw PreconditionError("embedding dimension changed mid-corpus");
        double n = v.norm();
        doc_vectors_.row(static_cast<Eigen::Index>(d)) = n > 0.0 ? EmbeddingVector(v / n) : v;
    }
}

std::vector<ScoredDoc> DenseRetriever::retrieve(std::string_view query, int k) const {
    if (k < 1) throw PreconditionError("retrieve needs k >= 1");
    EmbeddingVector q = embedder_.embed(query);
    if (q.size() != doc_vectors_.cols()) throw PreconditionError("query embedding dimension mismatch");
    double n = q.norm();
    if (n > 0.0) q /= n;
    Eigen::VectorXd sims = doc_vectors_ * q;
    std::vector<ScoredDoc> hits;
    const auto& docs = corpus_.documents();
    for (Eigen::Index d = 0; d < sims.size(); ++d) {
        if (sims[d] > 0.0) hits.push_back({docs[static_cast<std::size_t>(d)].id, sims[d]});
    }
    return top_k(std::move(hits), k);
}

const Document& DenseRetriever::document(std::string_view id) const {
    const auto* doc = corpus_.find(id);
    if (doc == nullptr) throw PreconditionError("unknown document id: " + std::string(id));
    return *doc;
}

}  // namespace pnr
