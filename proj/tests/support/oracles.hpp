#pragma once

// Brute-force reference implementations. They deliberately share no code with
// the library: straight formula evaluation, no indexes, no shortcuts.

#include <cstdint>
#include <functional>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace oracle {

/// AP@k by enumerating every prefix and recounting its hits from scratch.
double average_precision(const std::vector<std::string>& ranking, const std::set<std::string>& relevant,
                         std::size_t k);

/// Lowercased ASCII words split on anything that is not [A-Za-z0-9].
std::vector<std::string> ascii_words(const std::string& text);

struct Doc {
    std::string id;
    std::string text;
};

/// Okapi BM25 evaluated term by term over raw token lists. Sorted by
/// (score desc, id asc).
std::vector<std::pair<std::string, double>> bm25(const std::vector<Doc>& docs, const std::string& query, double k1,
                                                 double b);

struct RawPassage {
    std::string doc_id;
    std::vector<double> vector;  // not normalized
};

/// Max over passages of dot(a, b) / (|a| |b|), sorted by (score desc, id asc).
std::vector<std::pair<std::string, double>> dense(const std::vector<RawPassage>& passages,
                                                  const std::vector<double>& query);

/// Full-matrix Wagner-Fischer.
std::size_t levenshtein(const std::vector<std::string>& a, const std::vector<std::string>& b);

/// Central difference of f at x along coordinate (i, j).
double central_difference(const std::function<double(const std::vector<std::vector<double>>&)>& f,
                          std::vector<std::vector<double>> x, std::size_t i, std::size_t j, double h);

/// |a - b| / max(|a|, |b|, floor). The floor only matters for components that
/// are themselves within rounding noise of zero.
double relative_error(double a, double b, double floor = 1e-6);

std::vector<std::vector<double>> random_matrix(std::mt19937_64& rng, std::size_t rows, std::size_t cols,
                                               double lo = -1.0, double hi = 1.0);

}  // namespace oracle
