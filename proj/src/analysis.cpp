#include "recordkit/analysis.hpp"

#include <cmath>
#include <fstream>

#include <Eigen/Dense>

#include "recordkit/errors.hpp"

namespace recordkit {

double cosine(const Tensor& a, const Tensor& b) {
    if (a.numel() != b.numel()) {
        throw ShapeError("cosine: size mismatch " + a.shape_str() + " vs " + b.shape_str());
    }
    double na = norm2(a), nb = norm2(b);
    if (na == 0.0 && nb == 0.0) throw NumericalError("cosine: both vectors are zero");
    if (na == 0.0 || nb == 0.0) throw NumericalError("cosine: zero vector");
    return dot(a, b) / (na * nb);
}

size_t similarity_bin(double cosine_value) {
    double clamped = std::min(1.0, std::max(-1.0, cosine_value));
    auto bin = static_cast<long>(std::floor((clamped + 1.0) / 2.0 * kSimilarityBins));
    if (bin < 0) bin = 0;
    if (bin >= static_cast<long>(kSimilarityBins)) bin = kSimilarityBins - 1;
    return static_cast<size_t>(bin);
}

SimilarityReport similarity_report(const std::vector<EmbeddingRun>& runs,
                                   const Tensor& target_embedding) {
    if (runs.empty()) throw ConfigError("similarity_report: no runs");
    SimilarityReport report;
    report.pairs.reserve(runs.size());
    for (const EmbeddingRun& run : runs) {
        SimilarityPair pair;
        pair.init_target = cosine(run.init, target_embedding);
        pair.opt_target = cosine(run.final, target_embedding);
        pair.opt_init = cosine(run.final, run.init);
        report.hist_init_target[similarity_bin(pair.init_target)]++;
        report.hist_opt_target[similarity_bin(pair.opt_target)]++;
        report.hist_opt_init[similarity_bin(pair.opt_init)]++;
        report.pairs.push_back(pair);
    }
    return report;
}

std::vector<double> trajectory_distance(const TrajectoryRecord& a, const TrajectoryRecord& b,
                                        const std::string& tap) {
    const std::vector<Tensor>& ta = a.tap(tap);
    const std::vector<Tensor>& tb = b.tap(tap);
    if (ta.size() != tb.size()) {
        throw ShapeError("trajectory_distance: timestep counts differ (" +
                         std::to_string(ta.size()) + " vs " + std::to_string(tb.size()) + ")");
    }
    std::vector<double> out(ta.size());
    for (size_t t = 0; t < ta.size(); ++t) {
        if (!ta[t].same_shape(tb[t])) {
            throw ShapeError("trajectory_distance: tap widths differ at step " +
                             std::to_string(t));
        }
        double acc = 0.0;
        for (size_t i = 0; i < ta[t].numel(); ++i) {
            double diff = ta[t][i] - tb[t][i];
            acc += diff * diff;
        }
        out[t] = std::sqrt(acc);
    }
    return out;
}

PcaResult pca_project(const std::vector<Tensor>& points, size_t dims) {
    if (points.size() < 3) throw ConfigError("pca_project: need at least 3 points");
    if (dims != 2) throw ConfigError("pca_project: only 2-D projection is supported");
    size_t n = points.size();
    size_t d = points[0].numel();
    for (const Tensor& p : points) {
        if (p.numel() != d) throw ShapeError("pca_project: point sizes differ");
    }

    Eigen::MatrixXd x(n, d);
    for (size_t i = 0; i < n; ++i) {
        for (size_t j = 0; j < d; ++j) x(i, j) = points[i][j];
    }
    Eigen::RowVectorXd mean = x.colwise().mean();
    x.rowwise() -= mean;

    Eigen::MatrixXd scatter = x.transpose() * x;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(scatter);
    if (solver.info() != Eigen::Success) throw NumericalError("pca_project: eigensolver failed");
    // Eigen returns ascending eigenvalues.
    Eigen::VectorXd evals = solver.eigenvalues();
    Eigen::MatrixXd evecs = solver.eigenvectors();

    PcaResult result;
    result.eigenvalues.resize(d);
    for (size_t j = 0; j < d; ++j) result.eigenvalues[j] = evals(static_cast<long>(d - 1 - j));

    double total = std::max(evals.sum(), 0.0);
    double tol = std::max(total, 1.0) * 1e-12;
    size_t usable = 0;
    for (size_t j = 0; j < std::min(dims, d); ++j) {
        if (result.eigenvalues[j] > tol) ++usable;
    }
    result.components = usable;
    result.degenerate = usable < dims;

    result.coords.assign(n, {0.0, 0.0});
    for (size_t k = 0; k < usable; ++k) {
        Eigen::VectorXd v = evecs.col(static_cast<long>(d - 1 - k));
        // Deterministic sign: largest-magnitude coordinate positive.
        long arg = 0;
        v.cwiseAbs().maxCoeff(&arg);
        if (v(arg) < 0.0) v = -v;
        for (size_t i = 0; i < n; ++i) {
            result.coords[i][k] = x.row(static_cast<long>(i)).dot(v.transpose());
        }
    }
    return result;
}

void write_similarity_csv(const std::string& path, const SimilarityReport& report) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw MissingArtifactError("cannot open for writing: " + path);
    os.precision(17);
    os << "bin,lo,hi,init_target,opt_target,opt_init\n";
    for (size_t b = 0; b < kSimilarityBins; ++b) {
        double lo = -1.0 + 2.0 * static_cast<double>(b) / kSimilarityBins;
        double hi = -1.0 + 2.0 * static_cast<double>(b + 1) / kSimilarityBins;
        os << b << "," << lo << "," << hi << "," << report.hist_init_target[b] << ","
           << report.hist_opt_target[b] << "," << report.hist_opt_init[b] << "\n";
    }
}

void write_similarity_pairs_csv(const std::string& path, const SimilarityReport& report) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw MissingArtifactError("cannot open for writing: " + path);
    os.precision(17);
    os << "run,init_target,opt_target,opt_init\n";
    for (size_t i = 0; i < report.pairs.size(); ++i) {
        const SimilarityPair& p = report.pairs[i];
        os << i << "," << p.init_target << "," << p.opt_target << "," << p.opt_init << "\n";
    }
}

void write_trajectory_csv(const std::string& path,
                          const std::vector<std::pair<std::string, std::vector<double>>>& curves) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw MissingArtifactError("cannot open for writing: " + path);
    os.precision(17);
    os << "label,step,distance\n";
    for (const auto& [label, curve] : curves) {
        for (size_t t = 0; t < curve.size(); ++t) {
            os << label << "," << t << "," << curve[t] << "\n";
        }
    }
}

void write_pca_csv(const std::string& path, const std::vector<std::string>& labels,
                   const PcaResult& pca) {
    if (labels.size() != pca.coords.size()) {
        throw ConfigError("write_pca_csv: label count mismatch");
    }
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw MissingArtifactError("cannot open for writing: " + path);
    os.precision(17);
    os << "label,x,y\n";
    for (size_t i = 0; i < labels.size(); ++i) {
        os << labels[i] << "," << pca.coords[i][0] << "," << pca.coords[i][1] << "\n";
    }
}

}  // namespace recordkit
