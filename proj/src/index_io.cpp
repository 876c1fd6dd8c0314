#include "pnr/error.hpp"
#include "pnr/retrieval.hpp"

#include <json.hpp>

#include <istream>
#include <ostream>

namespace pnr {

namespace {

constexpr const char* kFormat = "pnr-bm25-index";
constexpr int kVersion = 1;

}  // namespace

void save_index(const Index& index, std::ostream& out) {
    using nlohmann::json;
    auto terms = index.terms();
    json header = {
        {"format", kFormat},
        {"version", kVersion},
        {"k1", index.params().k1},
        {"b", index.params().b},
        {"min_words", index.corpus().min_words()},
        {"documents", index.size()},
        {"terms", terms.size()},
    };
    out << header.dump() << '\n';
    for (const auto& doc : index.corpus().documents()) {
        out << json{{"id", doc.id}, {"text", doc.body}}.dump() << '\n';
    }
    for (const auto& term : terms) {
        json list = json::array();
        for (const auto& p : index.postings(term)) list.push_back({p.doc, p.tf});
        out << json{{"term", term}, {"postings", std::move(list)}}.dump() << '\n';
    }
}

namespace {

Index read_index(std::istream& in) {
    using nlohmann::json;
    std::string line;
    if (!std::getline(in, line)) throw FormatError("index file is empty");
    json header = json::parse(line, nullptr, false);
    if (header.is_discarded() || !header.is_object() || header.value("format", "") != kFormat) {
        throw FormatError("not a pnr index file");
    }
    if (header.value("version", -1) != kVersion) {
        throw FormatError("unsupported index version " + header.value("version", json(-1)).dump());
    }
    Bm25Params params{header.at("k1").get<double>(), header.at("b").get<double>()};
    auto min_words = header.at("min_words").get<std::size_t>();
    auto n_docs = header.at("documents").get<std::size_t>();
    auto n_terms = header.at("terms").get<std::size_t>();

    std::vector<CorpusRecord> records;
    records.reserve(n_docs);
    for (std::size_t i = 0; i < n_docs; ++i) {
        if (!std::getline(in, line)) throw FormatError("index file truncated in documents");
        json doc = json::parse(line, nullptr, false);
        if (doc.is_discarded() || !doc.contains("id") || !doc.contains("text")) {
            throw FormatError("bad document line " + std::to_string(i + 2));
        }
        records.push_back({doc["id"].get<std::string>(), doc["text"].get<std::string>()});
    }
    Index index = build_index(ingest_corpus(records, min_words), params);
    if (index.size() != n_docs) throw FormatError("stored documents violate the stored word filter");
    if (index.term_count() != n_terms) throw FormatError("stored term count disagrees with documents");

    for (std::size_t i = 0; i < n_terms; ++i) {
        if (!std::getline(in, line)) throw FormatError("index file truncated in postings");
        json entry = json::parse(line, nullptr, false);
        if (entry.is_discarded() || !entry.contains("term") || !entry.contains("postings")) {
            throw FormatError("bad postings line " + std::to_string(n_docs + i + 2));
        }
        auto term = entry["term"].get<std::string>();
        auto rebuilt = index.postings(term);
        const auto& stored = entry["postings"];
        bool same = stored.is_array() && stored.size() == rebuilt.size();
        for (std::size_t j = 0; same && j < rebuilt.size(); ++j) {
            same = stored[j].is_array() && stored[j].size() == 2 && stored[j][0].get<std::uint32_t>() == rebuilt[j].doc &&
                   stored[j][1].get<std::uint32_t>() == rebuilt[j].tf;
        }
        if (!same) throw FormatError("postings for term '" + term + "' disagree with documents");
    }
    return index;
}

}  // namespace

Index load_index(std::istream& in) {
    try {
        return read_index(in);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("index file: ") + e.what());
    }
}

}  // namespace pnr
