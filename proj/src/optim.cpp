#include "volmix/optim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace volmix::optim {

namespace {

double step_for(double x, double rel) { return rel * std::max(std::abs(x), 1.0); }

double dot(std::span<const double> a, std::span<const double> b) {
    return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

double max_abs(std::span<const double> v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

}  // namespace

std::vector<double> fd_gradient(const Objective& f, std::span<const double> x, double rel_step) {
    std::vector<double> probe(x.begin(), x.end());
    std::vector<double> g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double h = step_for(x[i], rel_step);
        probe[i] = x[i] + h;
        const double up = f(probe);
        probe[i] = x[i] - h;
        const double down = f(probe);
        probe[i] = x[i];
        g[i] = (up - down) / (2.0 * h);
    }
    return g;
}

Result bfgs(const Objective& f, std::vector<double> x0, const BfgsOptions& options, bool* stalled) {
    const std::size_t n = x0.size();
    Result r;
    r.method = "bfgs";
    r.x = std::move(x0);
    r.value = f(r.x);
    r.evaluations = 1;
    if (stalled != nullptr) *stalled = false;
    if (!std::isfinite(r.value)) return r;

    const double initial_value = r.value;
    auto grad = fd_gradient(f, r.x, options.fd_step);
    r.evaluations += 2 * n;

    // inverse Hessian approximation, row-major
    std::vector<double> hinv(n * n, 0.0);
    auto reset = [&] {
        std::fill(hinv.begin(), hinv.end(), 0.0);
        for (std::size_t i = 0; i < n; ++i) hinv[i * n + i] = 1.0;
    };
    reset();
    bool fresh_metric = true;

    std::vector<double> dir(n), xn(n), s(n), y(n), hy(n);
    bool first = true;
    for (r.iterations = 0; r.iterations < options.max_iterations; ++r.iterations) {
        if (max_abs(grad) <= options.gradient_tol * std::max(1.0, std::abs(r.value))) {
            r.converged = true;
            break;
        }
        if (stalled != nullptr && r.iterations >= options.stall_iterations && !(r.value < initial_value)) {
            *stalled = true;
            break;
        }
        for (std::size_t i = 0; i < n; ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc -= hinv[i * n + j] * grad[j];
            dir[i] = acc;
        }
        double slope = dot(grad, dir);
        if (!(slope < 0.0)) {
            reset();
            fresh_metric = true;
            for (std::size_t i = 0; i < n; ++i) dir[i] = -grad[i];
            slope = dot(grad, dir);
        }

        // Armijo backtracking; the first step is scaled so it moves at most ~1 unit
        double t = first ? std::min(1.0, 1.0 / std::max(max_abs(dir), 1e-12)) : 1.0;
        first = false;
        double fn = std::numeric_limits<double>::infinity();
        bool accepted = false;
        for (int k = 0; k < 60; ++k) {
            for (std::size_t i = 0; i < n; ++i) xn[i] = r.x[i] + t * dir[i];
            fn = f(xn);
            ++r.evaluations;
            if (std::isfinite(fn) && fn <= r.value + 1e-4 * t * slope) {
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if (!accepted) {
            // one steepest-descent restart, then give up
            if (fresh_metric) break;
            reset();
            fresh_metric = true;
            continue;
        }
        fresh_metric = false;

        const double improvement = r.value - fn;
        auto gn = fd_gradient(f, xn, options.fd_step);
        r.evaluations += 2 * n;
        for (std::size_t i = 0; i < n; ++i) {
            s[i] = xn[i] - r.x[i];
            y[i] = gn[i] - grad[i];
        }
        r.x = xn;
        r.value = fn;
        grad = std::move(gn);

        if (improvement <= options.value_tol * std::max(1.0, std::abs(r.value))) {
            r.converged = true;
            ++r.iterations;
            break;
        }

        const double sy = dot(s, y);
        if (sy > 1e-12 * std::sqrt(dot(s, s) * dot(y, y))) {
            for (std::size_t i = 0; i < n; ++i) {
                double acc = 0.0;
                for (std::size_t j = 0; j < n; ++j) acc += hinv[i * n + j] * y[j];
                hy[i] = acc;
            }
            const double yhy = dot(y, hy);
            const double rho = 1.0 / sy;
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t j = 0; j < n; ++j) {
                    hinv[i * n + j] += rho * ((1.0 + rho * yhy) * s[i] * s[j] - hy[i] * s[j] - s[i] * hy[j]);
                }
            }
        }
    }
    return r;
}

Result nelder_mead(const Objective& f, std::vector<double> x0, const NelderMeadOptions& options) {
    const std::size_t n = x0.size();
    Result r;
    r.method = "nelder-mead";
    std::vector<std::vector<double>> simplex(n + 1, x0);
    std::vector<double> values(n + 1);
    for (std::size_t i = 0; i < n; ++i) simplex[i + 1][i] += step_for(x0[i], options.initial_step);
    auto eval = [&](const std::vector<double>& x) {
        ++r.evaluations;
        const double v = f(x);
        return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
    };
    for (std::size_t i = 0; i <= n; ++i) values[i] = eval(simplex[i]);

    std::vector<std::size_t> order(n + 1);
    std::vector<double> centroid(n), trial(n), trial2(n);
    while (r.evaluations < options.max_evaluations) {
        ++r.iterations;
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
        const std::size_t best = order.front(), worst = order.back(), second = order[n - 1];
        if (std::abs(values[worst] - values[best]) <= options.value_tol * (std::abs(values[best]) + 1e-20)) {
            r.converged = true;
            break;
        }
        std::fill(centroid.begin(), centroid.end(), 0.0);
        for (std::size_t k = 0; k <= n; ++k) {
            if (k == worst) continue;
            for (std::size_t i = 0; i < n; ++i) centroid[i] += simplex[k][i] / static_cast<double>(n);
        }
        for (std::size_t i = 0; i < n; ++i) trial[i] = centroid[i] + (centroid[i] - simplex[worst][i]);
        const double fr = eval(trial);
        if (fr < values[best]) {
            for (std::size_t i = 0; i < n; ++i) trial2[i] = centroid[i] + 2.0 * (centroid[i] - simplex[worst][i]);
            const double fe = eval(trial2);
            if (fe < fr) {
                simplex[worst] = trial2;
                values[worst] = fe;
            } else {
                simplex[worst] = trial;
                values[worst] = fr;
            }
            continue;
        }
        if (fr < values[second]) {
            simplex[worst] = trial;
            values[worst] = fr;
            continue;
        }
        const bool outside = fr < values[worst];
        for (std::size_t i = 0; i < n; ++i) {
            trial2[i] = outside ? centroid[i] + 0.5 * (trial[i] - centroid[i])
                                : centroid[i] + 0.5 * (simplex[worst][i] - centroid[i]);
        }
        const double fc = eval(trial2);
        if (fc < std::min(fr, values[worst])) {
            simplex[worst] = trial2;
            values[worst] = fc;
            continue;
        }
        for (std::size_t k = 0; k <= n; ++k) {
            if (k == best) continue;
            for (std::size_t i = 0; i < n; ++i) simplex[k][i] = simplex[best][i] + 0.5 * (simplex[k][i] - simplex[best][i]);
            values[k] = eval(simplex[k]);
        }
    }
    const auto best = static_cast<std::size_t>(std::min_element(values.begin(), values.end()) - values.begin());
    r.x = simplex[best];
    r.value = values[best];
    return r;
}

Result minimize(const Objective& f, std::vector<double> x0, const BfgsOptions& options) {
    bool stalled = false;
    auto r = bfgs(f, x0, options, &stalled);
    if (stalled || !std::isfinite(r.value)) {
        auto nm = nelder_mead(f, stalled ? x0 : r.x);
        nm.evaluations += r.evaluations;
        if (!std::isfinite(r.value) || nm.value < r.value) return nm;
    }
    return r;
}

Matrix numerical_hessian(const Objective& f, std::span<const double> x, double rel_step) {
    const std::size_t n = x.size();
    Matrix hess(n, n);
    std::vector<double> p(x.begin(), x.end());
    std::vector<double> h(n);
    for (std::size_t i = 0; i < n; ++i) h[i] = rel_step * (x[i] != 0.0 ? std::abs(x[i]) : 1.0);
    const double f0 = f(p);
    for (std::size_t i = 0; i < n; ++i) {
        p[i] = x[i] + h[i];
        const double up = f(p);
        p[i] = x[i] - h[i];
        const double down = f(p);
        p[i] = x[i];
        hess(i, i) = (up - 2.0 * f0 + down) / (h[i] * h[i]);
        for (std::size_t j = 0; j < i; ++j) {
            auto at = [&](double si, double sj) {
                p[i] = x[i] + si * h[i];
                p[j] = x[j] + sj * h[j];
                const double v = f(p);
                p[i] = x[i];
                p[j] = x[j];
                return v;
            };
            const double v = (at(1, 1) - at(1, -1) - at(-1, 1) + at(-1, -1)) / (4.0 * h[i] * h[j]);
            hess(i, j) = v;
            hess(j, i) = v;
        }
    }
    return hess;
}

namespace {

bool cholesky(const Matrix& a, Matrix& l) {
    const std::size_t n = a.rows();
    l = Matrix(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        double d = a(j, j);
        for (std::size_t k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
        if (!(d > 0.0)) return false;
        l(j, j) = std::sqrt(d);
        for (std::size_t i = j + 1; i < n; ++i) {
            double s = a(i, j);
            for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
            l(i, j) = s / l(j, j);
        }
    }
    return true;
}

std::vector<double> cholesky_solve(const Matrix& l, std::span<const double> b) {
    const std::size_t n = l.rows();
    std::vector<double> z(b.begin(), b.end());
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < i; ++k) z[i] -= l(i, k) * z[k];
        z[i] /= l(i, i);
    }
    for (std::size_t i = n; i-- > 0;) {
        for (std::size_t k = i + 1; k < n; ++k) z[i] -= l(k, i) * z[k];
        z[i] /= l(i, i);
    }
    return z;
}

}  // namespace

bool invert_spd(const Matrix& a, Matrix& inverse) {
    Matrix l;
    if (!cholesky(a, l)) return false;
    const std::size_t n = a.rows();
    inverse = Matrix(n, n);
    std::vector<double> e(n, 0.0);
    for (std::size_t c = 0; c < n; ++c) {
        std::fill(e.begin(), e.end(), 0.0);
        e[c] = 1.0;
        const auto col = cholesky_solve(l, e);
        for (std::size_t r = 0; r < n; ++r) inverse(r, c) = col[r];
    }
    return true;
}

std::vector<double> least_squares(const Matrix& x, std::span<const double> y) {
    const std::size_t n = x.rows(), k = x.cols();
    if (y.size() != n) throw Error(Errc::ShapeMismatch, "least_squares: row count mismatch");
    Matrix xtx(k, k);
    std::vector<double> xty(k, 0.0);
    for (std::size_t r = 0; r < n; ++r) {
        const auto row = x.row(r);
        for (std::size_t i = 0; i < k; ++i) {
            xty[i] += row[i] * y[r];
            for (std::size_t j = 0; j <= i; ++j) xtx(i, j) += row[i] * row[j];
        }
    }
    for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = 0; j < i; ++j) xtx(j, i) = xtx(i, j);
    }
    Matrix l;
    if (!cholesky(xtx, l)) {
        // tiny ridge for collinear designs (e.g. constant exogenous columns)
        double scale = 0.0;
        for (std::size_t i = 0; i < k; ++i) scale = std::max(scale, xtx(i, i));
        for (std::size_t i = 0; i < k; ++i) xtx(i, i) += 1e-10 * std::max(scale, 1.0);
        if (!cholesky(xtx, l)) throw Error(Errc::InvalidArgument, "least_squares: singular design");
    }
    return cholesky_solve(l, xty);
}

}  // namespace volmix::optim
