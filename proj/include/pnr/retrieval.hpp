#pragma once

#include "pnr/backends.hpp"
#include "pnr/planner.hpp"

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace pnr {

struct CorpusRecord {
    std::string id;
    std::string text;
};

struct Document {
    std::string id;
    std::string body;
    std::size_t word_count = 0;
};

inline constexpr std::size_t kDefaultMinWords = 50;

class Corpus {
public:
    Corpus() = default;

    std::size_t size() const noexcept { return documents_.size(); }
    bool empty() const noexcept { return documents_.empty(); }
    std::size_t min_words() const noexcept { return min_words_; }
    /// Records offered at ingestion, before filtering.
    std::size_t records_seen() const noexcept { return records_seen_; }

    const std::vector<Document>& documents() const noexcept { return documents_; }
    const Document* find(std::string_view id) const;

private:
    friend Corpus ingest_corpus(std::span<const CorpusRecord>, std::size_t);

    std::vector<Document> documents_;
    std::unordered_map<std::string, std::size_t> by_id_;
    std::size_t min_words_ = 0;
    std::size_t records_seen_ = 0;
};

/// Keeps the records whose whitespace word count is at least min_words.
/// Throws PreconditionError naming the first duplicated id.
Corpus ingest_corpus(std::span<const CorpusRecord> records, std::size_t min_words = kDefaultMinWords);

/// Line-delimited JSON, one {"id": ..., "text": ...} object per line. Blank
/// lines are skipped. Throws FormatError with the 1-based line number.
std::vector<CorpusRecord> read_corpus_jsonl(std::istream& in);

struct ScoredDoc {
    std::string id;
    double score = 0.0;

    bool operator==(const ScoredDoc&) const = default;
};

/// Anything that can return the top-k documents for a query.
class Retriever {
public:
    virtual ~Retriever() = default;
    /// Descending score, ties by ascending id; only strictly positive scores.
    virtual std::vector<ScoredDoc> retrieve(std::string_view query, int k) const = 0;
    /// Throws PreconditionError for unknown ids.
    virtual const Document& document(std::string_view id) const = 0;
};

struct Bm25Params {
    double k1 = 1.2;
    double b = 0.75;
};

struct Posting {
    std::uint32_t doc = 0;
    std::uint32_t tf = 0;

    bool operator==(const Posting&) const = default;
};

/// Immutable BM25 inverted index. Concurrent reads are safe.
///
/// score(d, q) = sum over distinct query terms t, in first-occurrence order, of
///   qtf(t) * idf(t) * tf(t,d) * (k1 + 1) / (tf(t,d) + k1 * (1 - b + b * |d| / avgdl))
/// with idf(t) = ln(1 + (N - df(t) + 0.5) / (df(t) + 0.5)), |d| the number of
/// retrieval tokens in d and avgdl their mean over the corpus.
class Index final : public Retriever {
public:
    std::vector<ScoredDoc> retrieve(std::string_view query, int k) const override;
    const Document& document(std::string_view id) const override;

    std::size_t size() const noexcept { return corpus_.size(); }
    const Corpus& corpus() const noexcept { return corpus_; }
    const Bm25Params& params() const noexcept { return params_; }
    double avg_doc_length() const noexcept { return avg_doc_length_; }
    const std::vector<std::uint32_t>& doc_lengths() const noexcept { return doc_lengths_; }
    /// Empty span for unknown terms.
    std::span<const Posting> postings(std::string_view term) const;
    std::size_t term_count() const noexcept { return postings_.size(); }
    /// All terms in ascending order.
    std::vector<std::string> terms() const;

    double idf(std::string_view term) const;
    /// BM25 score of every document, indexed like corpus().documents().
    std::vector<double> score_all(std::string_view query) const;

private:
    friend Index build_index(Corpus corpus, Bm25Params params);

    Corpus corpus_;
    Bm25Params params_;
    std::unordered_map<std::string, std::vector<Posting>> postings_;
    std::vector<std::uint32_t> doc_lengths_;
    double avg_doc_length_ = 0.0;
};

/// Throws PreconditionError on an empty corpus.
Index build_index(Corpus corpus, Bm25Params params = {});

/// Top-k BM25 results; k must be at least 1.
std::vector<ScoredDoc> retrieve(const Retriever& retriever, std::string_view query, int k);

/// Writes a versioned line-delimited JSON index file: a header object, one
/// line per document and one line per term with its postings.
void save_index(const Index& index, std::ostream& out);
/// Reads save_index output, rebuilding and cross-checking the postings.
/// Throws FormatError on a bad header, version or inconsistent postings.
Index load_index(std::istream& in);

/// Per-step retrieval counts: floor(k / steps) each, remainder one apiece to
/// the earliest steps.
std::vector<int> allocate_budget(int k, int step_count);

struct ContextDoc {
    std::string doc_id;
    int step = 0;
    double score = 0.0;
};

struct RetrievedContext {
    std::vector<ContextDoc> docs;
    int budget = 0;
};

/// Retrieves each step's allocated count with the step's query and unions the
/// results in step order. A document already taken by an earlier step is
/// skipped, so the context may hold fewer than k documents.
RetrievedContext assemble_context(const Plan& plan, const Retriever& retriever, int k);

/// Greedy maximal marginal relevance over the top pool_size BM25 hits.
/// Relevance is the BM25 score divided by the pool's top score; similarity
/// is cosine over term-frequency vectors. Ties go to the earlier pool entry.
std::vector<std::string> mmr_rerank(const Index& index, std::string_view query, int pool_size, double lambda, int m);

/// Cosine similarity of the term-frequency vectors of two texts.
double tf_cosine(std::string_view a, std::string_view b);

/// Exact nearest-neighbour retrieval by embedding cosine similarity.
/// Embeds the whole corpus at construction.
class DenseRetriever final : public Retriever {
public:
    DenseRetriever(const Corpus& corpus, EmbeddingBackend& embedder);

    std::vector<ScoredDoc> retrieve(std::string_view query, int k) const override;
    const Document& document(std::string_view id) const override;

private:
    const Corpus& corpus_;
    EmbeddingBackend& embedder_;
    Eigen::MatrixXd doc_vectors_;  // one normalised row per document
};

}  // namespace pnr
