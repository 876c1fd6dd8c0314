#pragma once

// Deterministic stand-in for a language model, answering each of the
// engine's prompt kinds by string manipulation. It lets the whole pipeline,
// the dataset builders and the CLI run offline and reproducibly.
//
//   plan prompt       a valid plan built from the question's content words;
//                     the seed picks the step count and word rotation
//   generation        one sentence from each context document, chosen by seed
//   edit              the previous response with repeated sentences removed
//   claims            sentence split of the text
//   subtopics         the question's content words, one per line
//   NLI               "entailed" on lexical containment

#include "pnr/backends.hpp"

#include <memory>
#include <string>
#include <vector>

namespace pnr {

std::string simulate_response(const GenerationRequest& request);

/// Lower-cased question words minus a small stopword list, in order, unique.
std::vector<std::string> content_words(std::string_view text);

/// ScriptedBackend answering unscripted generations with simulate_response
/// and unscripted embeddings with hashed_embedding(dimension).
std::shared_ptr<ScriptedBackend> make_simulated_backend(Eigen::Index embedding_dimension = 64);

}  // namespace pnr
