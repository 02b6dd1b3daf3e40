#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "oovrec/common.hpp"

namespace oovrec::kernels {

// Data-parallel inner loops used by LSH projection, KNN scans and catalog
// scoring. Every parallel variant assigns whole output elements to threads
// and keeps the per-element accumulation order identical to the serial
// reference, so results are bit-identical at any thread count. The serial
// variants are kept as the reference implementations for tests and the
// benchmark tool.

double dot(std::span<const double> a, std::span<const double> b);

// out = M x
void matvec_serial(const Matrix& m, std::span<const double> x, Vec& out);
void matvec(const Matrix& m, std::span<const double> x, Vec& out);

// out[i] = dot(rows.row(i), query)
void dot_scores_serial(const Matrix& rows, std::span<const double> query, Vec& out);
void dot_scores(const Matrix& rows, std::span<const double> query, Vec& out);

// Indices of the k rows with the largest dot product against the query,
// sorted by descending score, ties broken toward the smaller index.
std::vector<uint32_t> topk_dot_serial(const Matrix& rows, std::span<const double> query,
                                      std::size_t k);
std::vector<uint32_t> topk_dot(const Matrix& rows, std::span<const double> query, std::size_t k);

int max_threads();

}  // namespace oovrec::kernels
