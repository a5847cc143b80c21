#ifndef STPDE_NOISE_HPP
#define STPDE_NOISE_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "stpde/util.hpp"

namespace stpde {

/// A continuous driving path beta: [0,T] -> R^N sampled on a uniform fine
/// mesh, plus its piecewise-linear smooth approximants. beta(0) = 0 per
/// channel. Immutable.
class NoisePath {
public:
    enum class Class { Brownian, Deterministic, SmoothApproximant };

    /// One Brownian realization per channel; increments are i.i.d. normal
    /// with variance T/M drawn from a counter-based generator, so the path
    /// is byte-identical for identical (seed, T, M, N) on any platform.
    static NoisePath sample_brownian(std::uint64_t seed, double T, int M, int N) {
        if (M < 2) throw DomainError("sample_brownian: M >= 2 required");
        if (N < 1 || N > 2) throw DomainError("sample_brownian: N in {1,2} supported");
        NoisePath p;
        p.cls_ = Class::Brownian;
        p.T_ = T;
        p.values_.assign(N, std::vector<double>(M + 1, 0.0));
        double sd = std::sqrt(T / M);
        for (int j = 0; j < N; ++j)
            for (int i = 1; i <= M; ++i)
                p.values_[j][i] = p.values_[j][i - 1] + sd * counter_normal(seed, std::uint64_t(j), std::uint64_t(i));
        return p;
    }

    /// Deterministic path from explicit samples (one vector per channel,
    /// uniform mesh on [0,T], first sample must be 0).
    static NoisePath deterministic(double T, std::vector<std::vector<double>> samples) {
        if (samples.empty() || samples.size() > 2) throw DomainError("deterministic path: N in {1,2}");
        std::size_t m = samples[0].size();
        if (m < 2) throw DomainError("deterministic path: need at least 2 samples");
        for (const auto& ch : samples) {
            if (ch.size() != m) throw DomainError("deterministic path: channel lengths differ");
            if (std::abs(ch[0]) > 1e-14) throw DomainError("deterministic path: beta(0) must be 0");
        }
        NoisePath p;
        p.cls_ = Class::Deterministic;
        p.T_ = T;
        p.values_ = std::move(samples);
        return p;
    }

    static NoisePath from_function(double T, int M, std::vector<std::function<double(double)>> fns) {
        std::vector<std::vector<double>> samples(fns.size());
        for (std::size_t j = 0; j < fns.size(); ++j) {
            samples[j].resize(M + 1);
            for (int i = 0; i <= M; ++i) samples[j][i] = fns[j](T * i / M) - fns[j](0.0);
        }
        return deterministic(T, std::move(samples));
    }

    /// Wong-Zakai piecewise-linear approximant on n equal subintervals of
    /// [0,T]; agrees with the parent at its own mesh nodes and carries a
    /// piecewise-constant derivative.
    NoisePath wong_zakai(int n) const {
        if (n < 1) throw DomainError("wong_zakai: n >= 1 required");
        if (std::size_t(n) > mesh_count()) throw DomainError("wong_zakai: level exceeds parent resolution");
        NoisePath p;
        p.cls_ = Class::SmoothApproximant;
        p.T_ = T_;
        p.level_ = n;
        p.values_.assign(channels(), std::vector<double>(n + 1, 0.0));
        for (int j = 0; j < channels(); ++j)
            for (int i = 0; i <= n; ++i) p.values_[j][i] = eval_channel(j, T_ * i / n);
        return p;
    }

    int channels() const { return int(values_.size()); }
    std::size_t mesh_count() const { return values_[0].size() - 1; }
    double horizon() const { return T_; }
    Class path_class() const { return cls_; }
    int level() const { return level_; }
    const std::vector<std::vector<double>>& samples() const { return values_; }

    /// linear interpolation between mesh nodes
    double eval_channel(int j, double t) const {
        if (t < -1e-12 || t > T_ * (1 + 1e-12)) throw DomainError("noise path eval: t outside [0,T]");
        double M = double(mesh_count());
        double s = std::clamp(t / T_, 0.0, 1.0) * M;
        int i = std::min(int(s), int(M) - 1);
        double frac = s - i;
        return values_[j][i] * (1.0 - frac) + values_[j][i + 1] * frac;
    }

    std::vector<double> eval(double t) const {
        std::vector<double> out(channels());
        for (int j = 0; j < channels(); ++j) out[j] = eval_channel(j, t);
        return out;
    }

    /// piecewise-constant derivative; only smooth approximants (and
    /// deterministic tables, which are piecewise linear by construction)
    /// may be differentiated
    double eval_derivative_channel(int j, double t) const {
        if (cls_ == Class::Brownian)
            throw UsageError("a Brownian path is never differentiated; use a smooth approximant");
        double M = double(mesh_count());
        double s = std::clamp(t / T_, 0.0, 1.0) * M;
        int i = std::min(int(s), int(M) - 1);
        return (values_[j][i + 1] - values_[j][i]) * M / T_;
    }

    double sup_distance(const NoisePath& other) const {
        if (other.channels() != channels()) throw DomainError("sup_distance: channel mismatch");
        std::size_t m = std::max(mesh_count(), other.mesh_count());
        double d = 0.0;
        for (int j = 0; j < channels(); ++j)
            for (std::size_t i = 0; i <= m; ++i) {
                double t = T_ * double(i) / double(m);
                d = std::max(d, std::abs(eval_channel(j, t) - other.eval_channel(j, t)));
            }
        return d;
    }

    void save_csv(const std::string& path) const {
        std::ofstream f(path);
        if (!f) throw UsageError("cannot open " + path + " for writing");
        f.precision(17);
        f << "time";
        for (int j = 0; j < channels(); ++j) f << ",beta" << j + 1;
        f << "\n";
        for (std::size_t i = 0; i <= mesh_count(); ++i) {
            f << T_ * double(i) / double(mesh_count());
            for (int j = 0; j < channels(); ++j) f << "," << values_[j][i];
            f << "\n";
        }
    }

    static NoisePath load_csv(const std::string& path) {
        std::ifstream f(path);
        if (!f) throw UsageError("cannot open " + path);
        std::string line;
        std::vector<double> times;
        std::vector<std::vector<double>> cols;
        int lineno = 0;
        while (std::getline(f, line)) {
            ++lineno;
            if (line.empty()) continue;
            if (lineno == 1 && line.find("time") != std::string::npos) continue;
            std::istringstream ss(line);
            std::string tok;
            std::vector<double> row;
            while (std::getline(ss, tok, ',')) {
                try {
                    row.push_back(std::stod(tok));
                } catch (...) {
                    throw UsageError("path CSV parse error at line " + std::to_string(lineno));
                }
            }
            if (row.size() < 2) throw UsageError("path CSV parse error at line " + std::to_string(lineno));
            if (!cols.empty() && row.size() != cols.size() + 1)
                throw UsageError("path CSV parse error at line " + std::to_string(lineno) + ": ragged row");
            times.push_back(row[0]);
            if (cols.empty()) cols.resize(row.size() - 1);
            for (std::size_t j = 0; j + 1 < row.size(); ++j) cols[j].push_back(row[j + 1]);
        }
        if (times.size() < 2) throw UsageError("path CSV: need at least 2 samples");
        double T = times.back();
        double dt = times[1] - times[0];
        for (std::size_t i = 1; i < times.size(); ++i)
            if (std::abs(times[i] - times[i - 1] - dt) > 1e-9 * std::max(1.0, T))
                throw UsageError("path CSV: mesh must be uniform (line " + std::to_string(i + 1) + ")");
        return deterministic(T, std::move(cols));
    }

private:
    NoisePath() = default;
    Class cls_ = Class::Deterministic;
    double T_ = 1.0;
    int level_ = 0;
    std::vector<std::vector<double>> values_;  // per channel, mesh nodes
};

}  // namespace stpde

#endif
