#include "oovrec/kernels.hpp"

#include <algorithm>
#include <numeric>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace oovrec::kernels {

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

void matvec_serial(const Matrix& m, std::span<const double> x, Vec& out) {
    out.resize(m.rows);
    for (std::size_t r = 0; r < m.rows; ++r) {
        out[r] = dot(m.row_span(r), x);
    }
}

void matvec(const Matrix& m, std::span<const double> x, Vec& out) {
    out.resize(m.rows);
    const std::int64_t n = static_cast<std::int64_t>(m.rows);
#pragma omp parallel for schedule(static)
    for (std::int64_t r = 0; r < n; ++r) {
        out[r] = dot(m.row_span(static_cast<std::size_t>(r)), x);
    }
}

void dot_scores_serial(const Matrix& rows, std::span<const double> query, Vec& out) {
    matvec_serial(rows, query, out);
}

void dot_scores(const Matrix& rows, std::span<const double> query, Vec& out) {
    matvec(rows, query, out);
}

namespace {

std::vector<uint32_t> select_topk(const Vec& scores, std::size_t k) {
    std::vector<uint32_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), 0u);
    k = std::min(k, idx.size());
    std::partial_sort(idx.begin(), idx.begin() + k, idx.end(), [&](uint32_t a, uint32_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return a < b;
    });
    idx.resize(k);
    return idx;
}

}  // namespace

std::vector<uint32_t> topk_dot_serial(const Matrix& rows, std::span<const double> query,
                                      std::size_t k) {
    Vec scores;
    dot_scores_serial(rows, query, scores);
    return select_topk(scores, k);
}

std::vector<uint32_t> topk_dot(const Matrix& rows, std::span<const double> query, std::size_t k) {
    Vec scores;
    dot_scores(rows, query, scores);
    return select_topk(scores, k);
}

int max_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

}  // namespace oovrec::kernels
