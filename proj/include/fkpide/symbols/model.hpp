#pragma once

#include <algorithm>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "fkpide/core.hpp"
#include "fkpide/symbols/measure.hpp"

namespace fkpide {

using Json = nlohmann::json;

/// (b, Sigma, F; h) plus a constant killing term c added to the symbol.
struct LevyCharacteristics {
    Vec drift = Vec::Zero(1);
    Mat covariance = Mat::Zero(1, 1);
    LevyMeasure measure = NoJumps{};
    Truncation truncation = Truncation::Full;
    double killing = 0.0;

    int dim() const { return static_cast<int>(drift.size()); }

    void validate() const {
        const auto d = drift.size();
        require(d >= 1, "characteristics: empty drift");
        require(covariance.rows() == d && covariance.cols() == d, "characteristics: covariance dimension mismatch");
        require((covariance - covariance.transpose()).norm() <= 1e-12 * (1 + covariance.norm()),
                "characteristics: covariance must be symmetric");
        if (d > 0 && covariance.norm() > 0) {
            Eigen::SelfAdjointEigenSolver<Mat> es(covariance);
            require(es.eigenvalues().minCoeff() >= -1e-12, "characteristics: covariance must be positive semidefinite");
        }
        measure::validate(measure);
        require(measure::dim(measure) == d, "characteristics: measure dimension mismatch");
        if (d > 1 && measure::has_jumps(measure))
            require(truncation == Truncation::Full, "characteristics: d > 1 jumps need full truncation");
    }
};

/// Piecewise-constant, by default right-continuous path of parameter
/// vectors or matrices. `breaks` are the interior jump times.
struct TimeParameterPath {
    std::vector<double> breaks;
    std::vector<Mat> values;
    bool right_continuous = true;

    std::size_t segment(double t) const {
        auto it = right_continuous ? std::upper_bound(breaks.begin(), breaks.end(), t)
                                   : std::lower_bound(breaks.begin(), breaks.end(), t);
        return static_cast<std::size_t>(it - breaks.begin());
    }
    const Mat &at(double t) const { return values[segment(t)]; }

    void validate() const {
        require(values.size() == breaks.size() + 1, "time path: need one value per segment");
        require(std::is_sorted(breaks.begin(), breaks.end()), "time path: breakpoints must be sorted");
        for (std::size_t i = 1; i < breaks.size(); ++i)
            require(breaks[i] > breaks[i - 1], "time path: breakpoints must be distinct");
    }
};

/// d = 1 split of a symbol as q2 z^2 + q1 z + q0 + jump(z).
struct LocalPart {
    Complex q2{}, q1{}, q0{};
};

class SymbolNode {
public:
    virtual ~SymbolNode() = default;
    virtual int dim() const = 0;
    /// Symbol without strip check; for the parametric families this is the
    /// analytic continuation, valid on Re z > 0 in d = 1.
    virtual Complex eval(double t, const CVec &z) const = 0;
    virtual Complex jump1(double t, Complex z) const = 0;
    virtual LocalPart local1(double t) const = 0;
    /// Jump part for contour deformation far from the origin (d = 1); agrees
    /// with jump1 to rounding on the real axis beyond far_frequency(t).
    virtual Complex jump1_far(double t, Complex z) const { return jump1(t, z); }
    virtual double far_frequency(double) const { return 0.0; }
    virtual bool in_strip(const Vec &im) const = 0;
    virtual std::vector<Interval> strip() const = 0;
    virtual double declared_index() const = 0;
    virtual void collect_breaks(std::vector<double> &) const {}
    virtual bool continuable() const = 0;
    virtual bool special() const = 0;
    virtual bool has_jumps() const = 0;
    virtual Json to_json() const = 0;
};

/// Immutable handle to a (possibly time-inhomogeneous) Levy symbol.
class LevyModel {
public:
    LevyModel() = default;
    explicit LevyModel(std::shared_ptr<const SymbolNode> node) : node_(std::move(node)) {}

    int dim() const { return node_->dim(); }
    const SymbolNode &node() const { return *node_; }
    std::shared_ptr<const SymbolNode> node_ptr() const { return node_; }

    bool in_strip(const Vec &im) const { return node_->in_strip(im); }
    std::vector<Interval> strip() const { return node_->strip(); }
    double declared_index() const { return node_->declared_index(); }
    bool continuable() const { return node_->continuable(); }
    bool special() const { return node_->special(); }
    bool has_jumps() const { return node_->has_jumps(); }
    Json to_json() const { return node_->to_json(); }

    std::vector<double> breakpoints() const {
        std::vector<double> b;
        node_->collect_breaks(b);
        std::sort(b.begin(), b.end());
        b.erase(std::unique(b.begin(), b.end()), b.end());
        return b;
    }
    bool time_homogeneous() const { return breakpoints().empty(); }

    /// Symbol with strip check.
    Complex operator()(double t, const CVec &z) const {
        if (!node_->in_strip(z.imag()))
            throw StripError("symbol argument outside the admissible strip");
        return node_->eval(t, z);
    }
    Complex operator()(double t, Complex z) const { return (*this)(t, cvec1(z)); }

    Complex eval_unchecked(double t, Complex z) const { return node_->eval(t, cvec1(z)); }

private:
    std::shared_ptr<const SymbolNode> node_;
};

namespace detail {

inline bool covariance_definite(const Mat &S) {
    if (S.norm() == 0) return false;
    Eigen::SelfAdjointEigenSolver<Mat> es(S);
    return es.eigenvalues().minCoeff() > 1e-14;
}

inline Json vec_to_json(const Vec &v) {
    Json a = Json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
    return a;
}

inline Json mat_to_json(const Mat &m) {
    Json a = Json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        Json row = Json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        a.push_back(row);
    }
    return a;
}

inline Vec vec_from_json(const Json &j) {
    if (j.is_number()) return vec1(j.get<double>());
    Vec v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
    return v;
}

inline Mat mat_from_json(const Json &j) {
    if (j.is_number()) return mat1(j.get<double>());
    const auto r = static_cast<Eigen::Index>(j.size());
    if (r > 0 && j[0].is_number()) {
        // A flat list is a diagonal.
        Mat m = Mat::Zero(r, r);
        for (Eigen::Index i = 0; i < r; ++i) m(i, i) = j[static_cast<std::size_t>(i)].get<double>();
        return m;
    }
    const auto c = r > 0 ? static_cast<Eigen::Index>(j[0].size()) : 0;
    Mat m(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
        for (Eigen::Index k = 0; k < c; ++k) m(i, k) = j[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)].get<double>();
    return m;
}

inline Json measure_to_json(const LevyMeasure &m) {
    return std::visit(
        [](const auto &v) -> Json {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, NoJumps>) {
                return Json{{"type", "none"}};
            } else if constexpr (std::is_same_v<T, CgmyMeasure>) {
                return Json{{"type", "cgmy"}, {"c_minus", v.c_minus}, {"c_plus", v.c_plus}, {"G", v.G},
                            {"M", v.M},       {"y_minus", v.y_minus}, {"y_plus", v.y_plus}};
            } else if constexpr (std::is_same_v<T, NigMeasure>) {
                return Json{{"type", "nig"}, {"alpha", v.alpha}, {"delta", v.delta},
                            {"beta", vec_to_json(v.beta)}, {"shape", mat_to_json(v.shape)}};
            } else if constexpr (std::is_same_v<T, CompoundPoissonMeasure>) {
                return Json{{"type", "compound_poisson"}, {"intensity", v.intensity}, {"mean", v.mean},
                            {"stddev", v.stddev}};
            } else {
                throw ConfigError("user densities cannot be serialized ('" + v.label + "')");
            }
        },
        m);
}

inline LevyMeasure measure_from_json(const Json &j) {
    const std::string type = j.at("type").get<std::string>();
    if (type == "none") return NoJumps{};
    if (type == "cgmy")
        return CgmyMeasure{j.at("c_minus").get<double>(), j.at("c_plus").get<double>(), j.at("G").get<double>(),
                           j.at("M").get<double>(),       j.at("y_minus").get<double>(), j.at("y_plus").get<double>()};
    if (type == "nig")
        return NigMeasure{j.at("alpha").get<double>(), j.at("delta").get<double>(), vec_from_json(j.at("beta")),
                          mat_from_json(j.at("shape"))};
    if (type == "compound_poisson")
        return CompoundPoissonMeasure{j.at("intensity").get<double>(), j.at("mean").get<double>(),
                                      j.at("stddev").get<double>()};
    throw ConfigError("unknown measure type '" + type + "'");
}

class TripletNode final : public SymbolNode {
public:
    TripletNode(LevyCharacteristics c, Json spec) : c_(std::move(c)), spec_(std::move(spec)) {
        c_.validate();
        if (c_.dim() == 1) gap_ = measure::truncation_gap(c_.measure, c_.truncation);
    }
    const LevyCharacteristics &characteristics() const { return c_; }

    int dim() const override { return c_.dim(); }
    Complex eval(double, const CVec &z) const override {
        const CVec Sz = c_.covariance.cast<Complex>() * z;
        Complex a = 0.5 * (z.transpose() * Sz)(0, 0);
        a += kI * (z.transpose() * c_.drift.cast<Complex>())(0, 0);
        if (measure::has_jumps(c_.measure)) {
            a += measure::jump_full(c_.measure, z);
            if (gap_ != 0.0) a += kI * z(0) * gap_;
        }
        return a + c_.killing;
    }
    Complex jump1(double, Complex z) const override {
        return measure::has_jumps(c_.measure) ? measure::jump_full(c_.measure, cvec1(z)) : Complex{};
    }
    LocalPart local1(double) const override {
        return {0.5 * c_.covariance(0, 0), kI * (c_.drift(0) + gap_), c_.killing};
    }
    Complex jump1_far(double, Complex z) const override {
        return measure::has_jumps(c_.measure) ? measure::jump_full_far(c_.measure, z) : Complex{};
    }
    double far_frequency(double) const override { return measure::far_frequency(c_.measure); }
    bool in_strip(const Vec &im) const override { return measure::in_strip(c_.measure, im); }
    std::vector<Interval> strip() const override {
        auto s = measure::strip(c_.measure);
        s.resize(static_cast<std::size_t>(c_.dim()), s.empty() ? Interval{} : s.back());
        return s;
    }
    double declared_index() const override {
        if (covariance_definite(c_.covariance)) return 2.0;
        return measure::activity_index(c_.measure);
    }
    bool continuable() const override { return measure::continuable(c_.measure); }
    bool special() const override { return c_.truncation == Truncation::Full || !measure::has_jumps(c_.measure); }
    bool has_jumps() const override { return measure::has_jumps(c_.measure); }
    Json to_json() const override {
        if (!spec_.is_null()) return spec_;
        return Json{{"family", "triplet"},
                    {"drift", vec_to_json(c_.drift)},
                    {"covariance", mat_to_json(c_.covariance)},
                    {"measure", measure_to_json(c_.measure)},
                    {"truncation", to_string(c_.truncation)},
                    {"killing", c_.killing}};
    }

private:
    LevyCharacteristics c_;
    Json spec_;
    double gap_ = 0.0;
};

class SumNode final : public SymbolNode {
public:
    SumNode(LevyModel a, LevyModel b) : a_(std::move(a)), b_(std::move(b)) {
        require(a_.dim() == b_.dim(), "sum_symbols: dimension mismatch");
        for (const auto &iv : strip())
            if (iv.empty()) throw DomainError("sum_symbols: admissible strips do not overlap");
    }
    const LevyModel &first() const { return a_; }
    const LevyModel &second() const { return b_; }

    int dim() const override { return a_.dim(); }
    Complex eval(double t, const CVec &z) const override { return a_.node().eval(t, z) + b_.node().eval(t, z); }
    Complex jump1(double t, Complex z) const override { return a_.node().jump1(t, z) + b_.node().jump1(t, z); }
    LocalPart local1(double t) const override {
        auto p = a_.node().local1(t), q = b_.node().local1(t);
        return {p.q2 + q.q2, p.q1 + q.q1, p.q0 + q.q0};
    }
    Complex jump1_far(double t, Complex z) const override {
        return a_.node().jump1_far(t, z) + b_.node().jump1_far(t, z);
    }
    double far_frequency(double t) const override {
        return std::max(a_.node().far_frequency(t), b_.node().far_frequency(t));
    }
    bool in_strip(const Vec &im) const override { return a_.in_strip(im) && b_.in_strip(im); }
    std::vector<Interval> strip() const override {
        auto s = a_.strip(), t = b_.strip();
        for (std::size_t i = 0; i < s.size(); ++i) s[i] = s[i].intersect(t[i]);
        return s;
    }
    double declared_index() const override { return std::max(a_.declared_index(), b_.declared_index()); }
    void collect_breaks(std::vector<double> &out) const override {
        a_.node().collect_breaks(out);
        b_.node().collect_breaks(out);
    }
    bool continuable() const override { return a_.continuable() && b_.continuable(); }
    bool special() const override { return a_.special() && b_.special(); }
    bool has_jumps() const override { return a_.has_jumps() || b_.has_jumps(); }
    Json to_json() const override { return Json{{"family", "sum"}, {"parts", Json::array({a_.to_json(), b_.to_json()})}}; }

private:
    LevyModel a_, b_;
};

class PiecewiseNode final : public SymbolNode {
public:
    PiecewiseNode(std::vector<double> breaks, std::vector<LevyModel> segments, bool right_continuous)
        : path_{std::move(breaks), {}, right_continuous}, segs_(std::move(segments)) {
        path_.values.assign(segs_.size(), Mat());
        path_.validate();
        for (const auto &s : segs_) require(s.dim() == segs_.front().dim(), "time path: dimension mismatch");
    }
    const LevyModel &at(double t) const { return segs_[path_.segment(t)]; }
    const std::vector<LevyModel> &segments() const { return segs_; }
    const std::vector<double> &breaks() const { return path_.breaks; }

    int dim() const override { return segs_.front().dim(); }
    Complex eval(double t, const CVec &z) const override { return at(t).node().eval(t, z); }
    Complex jump1(double t, Complex z) const override { return at(t).node().jump1(t, z); }
    LocalPart local1(double t) const override { return at(t).node().local1(t); }
    Complex jump1_far(double t, Complex z) const override { return at(t).node().jump1_far(t, z); }
    double far_frequency(double t) const override { return at(t).node().far_frequency(t); }
    bool in_strip(const Vec &im) const override {
        return std::all_of(segs_.begin(), segs_.end(), [&](const LevyModel &m) { return m.in_strip(im); });
    }
    std::vector<Interval> strip() const override {
        auto s = segs_.front().strip();
        for (const auto &m : segs_) {
            auto t = m.strip();
            for (std::size_t i = 0; i < s.size(); ++i) s[i] = s[i].intersect(t[i]);
        }
        return s;
    }
    double declared_index() const override {
        double a = 0;
        for (const auto &m : segs_) a = std::max(a, m.declared_index());
        return a;
    }
    void collect_breaks(std::vector<double> &out) const override {
        out.insert(out.end(), path_.breaks.begin(), path_.breaks.end());
        for (const auto &m : segs_) m.node().collect_breaks(out);
    }
    bool continuable() const override {
        return std::all_of(segs_.begin(), segs_.end(), [](const LevyModel &m) { return m.continuable(); });
    }
    bool special() const override {
        return std::all_of(segs_.begin(), segs_.end(), [](const LevyModel &m) { return m.special(); });
    }
    bool has_jumps() const override {
        return std::any_of(segs_.begin(), segs_.end(), [](const LevyModel &m) { return m.has_jumps(); });
    }
    bool right_continuous() const { return path_.right_continuous; }
    Json to_json() const override {
        Json segs = Json::array();
        for (const auto &m : segs_) segs.push_back(m.to_json());
        Json j{{"family", "piecewise"}, {"breaks", path_.breaks}, {"segments", segs}};
        if (!path_.right_continuous) j["right_continuous"] = false;
        return j;
    }

private:
    TimeParameterPath path_;
    std::vector<LevyModel> segs_;
};

class IntegrandNode final : public SymbolNode {
public:
    IntegrandNode(LevyModel base, TimeParameterPath f) : base_(std::move(base)), f_(std::move(f)) {
        f_.validate();
        require(base_.special(), "with_integrand: base must use the full-identity truncation");
        const auto d = base_.dim();
        for (const auto &m : f_.values) {
            require(m.rows() == d && m.cols() == d, "with_integrand: integrand dimension mismatch");
            const Mat ff = m * m.transpose();
            require(ff.allFinite(), "with_integrand: non-finite integrand");
            Eigen::SelfAdjointEigenSolver<Mat> es(ff);
            require(es.eigenvalues().minCoeff() > 1e-14, "with_integrand: f f^T must be invertible");
        }
    }
    const LevyModel &base() const { return base_; }
    const TimeParameterPath &path() const { return f_; }

    int dim() const override { return base_.dim(); }
    Complex eval(double t, const CVec &z) const override {
        const CVec fz = f_.at(t).transpose().cast<Complex>() * z;
        return base_.node().eval(t, fz);
    }
    Complex jump1(double t, Complex z) const override { return base_.node().jump1(t, f_.at(t)(0, 0) * z); }
    LocalPart local1(double t) const override {
        const double f = f_.at(t)(0, 0);
        auto p = base_.node().local1(t);
        return {p.q2 * f * f, p.q1 * f, p.q0};
    }
    Complex jump1_far(double t, Complex z) const override { return base_.node().jump1_far(t, f_.at(t)(0, 0) * z); }
    double far_frequency(double t) const override {
        return base_.node().far_frequency(t) / std::abs(f_.at(t)(0, 0));
    }
    bool in_strip(const Vec &im) const override {
        for (const auto &m : f_.values)
            if (!base_.in_strip(m.transpose() * im)) return false;
        return true;
    }
    std::vector<Interval> strip() const override {
        // Exact for diagonal integrands.
        auto b = base_.strip();
        std::vector<Interval> s(b.size());
        for (const auto &m : f_.values)
            for (std::size_t i = 0; i < s.size(); ++i) {
                const double f = m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i));
                Interval iv = f > 0 ? Interval{b[i].lo / f, b[i].hi / f} : Interval{b[i].hi / f, b[i].lo / f};
                s[i] = s[i].intersect(iv);
            }
        return s;
    }
    double declared_index() const override { return base_.declared_index(); }
    void collect_breaks(std::vector<double> &out) const override {
        out.insert(out.end(), f_.breaks.begin(), f_.breaks.end());
        base_.node().collect_breaks(out);
    }
    bool continuable() const override { return base_.continuable(); }
    bool special() const override { return true; }
    bool has_jumps() const override { return base_.has_jumps(); }
    Json to_json() const override {
        Json vals = Json::array();
        for (const auto &m : f_.values) vals.push_back(mat_to_json(m));
        return Json{{"family", "integrand"}, {"base", base_.to_json()}, {"breaks", f_.breaks}, {"values", vals}};
    }

private:
    LevyModel base_;
    TimeParameterPath f_;
};

}  // namespace detail

/// How the drift of a pure-jump family is fixed.
struct DriftMode {
    enum class Kind { Explicit, Martingale, ZeroTruncation };
    Kind kind = Kind::Explicit;
    double value = 0.0;  // drift for Explicit, interest rate for Martingale
    Truncation truncation = Truncation::Full;  // for Explicit

    static DriftMode explicit_drift(double b, Truncation h = Truncation::Full) { return {Kind::Explicit, b, h}; }
    static DriftMode martingale(double rate) { return {Kind::Martingale, rate, Truncation::Full}; }
    static DriftMode zero_truncation() { return {Kind::ZeroTruncation, 0.0, Truncation::Zero}; }
};

inline LevyModel make_model(const LevyCharacteristics &c, Json spec = nullptr) {
    return LevyModel(std::make_shared<detail::TripletNode>(c, std::move(spec)));
}

/// Triplet of the model if it is a single time-homogeneous triplet node.
inline const LevyCharacteristics *characteristics_of(const LevyModel &m) {
    if (auto *t = dynamic_cast<const detail::TripletNode *>(&m.node())) return &t->characteristics();
    return nullptr;
}

namespace detail {

inline Json drift_mode_json(const DriftMode &dm) {
    switch (dm.kind) {
        case DriftMode::Kind::Explicit:
            return Json{{"drift_mode", "explicit"}, {"drift", dm.value}, {"truncation", to_string(dm.truncation)}};
        case DriftMode::Kind::Martingale: return Json{{"drift_mode", "martingale"}, {"rate", dm.value}};
        case DriftMode::Kind::ZeroTruncation: return Json{{"drift_mode", "zero_truncation"}};
    }
    return {};
}

// Drift with full truncation making exp(L) grow at `rate`: A(i) = -rate.
inline double martingale_drift(const LevyMeasure &m, double rate) {
    return rate + measure::jump_full(m, cvec1(kI)).real();
}

inline LevyModel pure_jump(const LevyMeasure &m, const DriftMode &dm, Json spec) {
    LevyCharacteristics c;
    c.measure = m;
    switch (dm.kind) {
        case DriftMode::Kind::Explicit:
            c.drift = vec1(dm.value);
            c.truncation = dm.truncation;
            break;
        case DriftMode::Kind::Martingale:
            measure::validate(m);
            require(measure::in_strip(m, vec1(1.0)), "martingale drift needs a finite exponential moment E e^{L}");
            c.drift = vec1(martingale_drift(m, dm.value));
            c.truncation = Truncation::Full;
            break;
        case DriftMode::Kind::ZeroTruncation:
            require(measure::activity_index(m) < 1, "zero truncation requires jump activity index below 1");
            c.drift = vec1(0.0);
            c.truncation = Truncation::Zero;
            break;
    }
    const Json mode = drift_mode_json(dm);
    for (auto it = mode.begin(); it != mode.end(); ++it) spec[it.key()] = it.value();
    return make_model(c, std::move(spec));
}

}  // namespace detail

inline LevyModel make_cgmy(double c_minus, double c_plus, double G, double M, double y_minus, double y_plus,
                           const DriftMode &dm = {}) {
    CgmyMeasure cm{c_minus, c_plus, G, M, y_minus, y_plus};
    measure::validate(cm);
    Json spec{{"family", "cgmy"}, {"c_minus", c_minus}, {"c_plus", c_plus}, {"G", G},
              {"M", M},          {"y_minus", y_minus}, {"y_plus", y_plus}};
    return detail::pure_jump(cm, dm, std::move(spec));
}

/// Symmetric-activity shorthand C- = C+ = C, Y- = Y+ = Y.
inline LevyModel make_cgmy(double C, double G, double M, double Y, const DriftMode &dm = {}) {
    return make_cgmy(C, C, G, M, Y, Y, dm);
}

/// NIG in the closed form A(z) = i<z,mu> - delta (sqrt(a^2 - <b,Db>) - sqrt(a^2 - <b+iz, D(b+iz)>)).
inline LevyModel make_nig(double alpha, const Vec &beta, double delta, const Vec &mu, const Mat &shape) {
    NigMeasure nm{alpha, delta, beta, shape};
    measure::validate(nm);
    require(mu.size() == beta.size(), "NIG: mu dimension mismatch");
    const double gamma = std::sqrt(alpha * alpha - beta.dot(shape * beta));
    LevyCharacteristics c;
    c.drift = mu - delta * (shape * beta) / gamma;
    c.covariance = Mat::Zero(beta.size(), beta.size());
    c.measure = nm;
    c.truncation = Truncation::Full;
    Json spec{{"family", "nig"},
              {"alpha", alpha},
              {"beta", detail::vec_to_json(beta)},
              {"delta", delta},
              {"mu", detail::vec_to_json(mu)},
              {"shape", detail::mat_to_json(shape)}};
    return make_model(c, std::move(spec));
}

inline LevyModel make_nig(double alpha, double beta, double delta, double mu = 0.0, double shape = 1.0) {
    return make_nig(alpha, vec1(beta), delta, vec1(mu), mat1(shape));
}

/// Diffusion (b, Sigma) plus an optional independent jump part.
inline LevyModel make_jump_diffusion(const Vec &b, const Mat &sigma, const LevyModel *jumps = nullptr) {
    LevyCharacteristics c;
    c.drift = b;
    c.covariance = sigma;
    c.measure = NoJumps{};
    Json spec{{"family", "brownian"}, {"drift", detail::vec_to_json(b)}, {"covariance", detail::mat_to_json(sigma)}};
    LevyModel diff = make_model(c, spec);
    if (!jumps) return diff;
    return LevyModel(std::make_shared<detail::SumNode>(diff, *jumps));
}

inline LevyModel make_brownian(double sigma, double drift = 0.0) {
    return make_jump_diffusion(vec1(drift), mat1(sigma * sigma));
}

/// Finite-activity jumps with N(mean, stddev^2) sizes; drift in the zero truncation.
inline LevyModel make_compound_poisson(double intensity, double mean, double stddev, double drift = 0.0) {
    LevyCharacteristics c;
    c.drift = vec1(drift);
    c.measure = CompoundPoissonMeasure{intensity, mean, stddev};
    c.truncation = Truncation::Zero;
    Json spec{{"family", "compound_poisson"}, {"intensity", intensity}, {"mean", mean},
              {"stddev", stddev},             {"drift", drift}};
    return make_model(c, std::move(spec));
}

/// Constant symbol c (pure killing).
inline LevyModel make_constant(double c, int d = 1) {
    LevyCharacteristics ch;
    ch.drift = Vec::Zero(d);
    ch.covariance = Mat::Zero(d, d);
    ch.killing = c;
    return make_model(ch, Json{{"family", "constant"}, {"value", c}, {"dim", d}});
}

inline LevyModel sum_symbols(const LevyModel &a, const LevyModel &b) {
    return LevyModel(std::make_shared<detail::SumNode>(a, b));
}

/// A_t = segment model active at t (right-continuous unless stated).
inline LevyModel with_time_params(std::vector<LevyModel> segments, std::vector<double> breaks,
                                  bool right_continuous = true) {
    if (segments.size() == 1 && breaks.empty()) return segments.front();
    return LevyModel(std::make_shared<detail::PiecewiseNode>(std::move(breaks), std::move(segments), right_continuous));
}

/// A_t(z) = A(p(t), z) for a parameter family.
inline LevyModel with_time_params(const std::function<LevyModel(const Vec &)> &family, const TimeParameterPath &path) {
    path.validate();
    std::vector<LevyModel> segs;
    for (std::size_t i = 0; i < path.values.size(); ++i) {
        const Mat &p = path.values[i];
        try {
            segs.push_back(family(Eigen::Map<const Vec>(p.data(), p.size())));
        } catch (const DomainError &e) {
            throw DomainError("with_time_params: segment " + std::to_string(i) + ": " + e.what());
        }
    }
    return with_time_params(std::move(segs), path.breaks, path.right_continuous);
}

/// Symbol of X = int f dL for a deterministic piecewise-constant integrand.
inline LevyModel with_integrand(const LevyModel &base, const TimeParameterPath &f) {
    return LevyModel(std::make_shared<detail::IntegrandNode>(base, f));
}

inline Complex eval_symbol(const LevyModel &m, double t, const CVec &z) { return m(t, z); }
inline Complex eval_symbol(const LevyModel &m, double t, Complex z) { return m(t, z); }

/// int_s^t A_u(z) du, exact for piecewise-constant paths.
inline Complex integrate_exponent(const LevyModel &m, double s, double t, const CVec &z) {
    require(s <= t, "integrate_exponent: need s <= t");
    if (!m.in_strip(z.imag())) throw StripError("integrate_exponent: argument outside the admissible strip");
    if (s == t) return 0.0;
    std::vector<double> pts{s};
    for (double b : m.breakpoints())
        if (b > s && b < t) pts.push_back(b);
    pts.push_back(t);
    Complex acc = 0.0;
    for (std::size_t i = 0; i + 1 < pts.size(); ++i)
        acc += (pts[i + 1] - pts[i]) * m.node().eval(0.5 * (pts[i] + pts[i + 1]), z);
    return acc;
}

inline Complex integrate_exponent(const LevyModel &m, double s, double t, Complex z) {
    return integrate_exponent(m, s, t, cvec1(z));
}

/// E exp(<i xi + eta, L_t>) = exp(-int_0^t A_s(-xi + i eta) ds).
inline Complex characteristic_function(const LevyModel &m, double t, const Vec &xi, const Vec &eta) {
    const CVec z = (-xi).cast<Complex>() + kI * eta.cast<Complex>();
    return std::exp(-integrate_exponent(m, 0.0, t, z));
}

inline Complex characteristic_function(const LevyModel &m, double t, double xi, double eta = 0.0) {
    return characteristic_function(m, t, vec1(xi), vec1(eta));
}

struct ShiftedCharacteristics {
    LevyCharacteristics characteristics;
    double killing_constant = 0.0;
};

/// (b^eta, Sigma, e^{<eta,y>}F) and A(i eta), so that
/// A(xi + i eta) = A^{shifted}(xi) + A(i eta).
inline ShiftedCharacteristics shift_characteristics(const LevyCharacteristics &c, const Vec &eta) {
    c.validate();
    require(eta.size() == c.dim(), "shift_characteristics: weight dimension mismatch");
    if (!measure::in_strip(c.measure, eta))
        throw DomainError("shift_characteristics: exponential moment condition fails at the weight");
    ShiftedCharacteristics out;
    out.characteristics = c;
    out.characteristics.killing = 0.0;
    Vec b = c.drift + c.covariance * eta;
    if (measure::has_jumps(c.measure)) {
        b += measure::shift_moment_full(c.measure, eta);
        if (c.dim() == 1) b(0) -= measure::shift_truncation_gap(c.measure, c.truncation, eta(0));
        out.characteristics.measure = measure::tilt(c.measure, eta);
    }
    out.characteristics.drift = b;
    const LevyModel orig = make_model(c);
    out.killing_constant = orig.node().eval(0.0, (kI * eta.cast<Complex>()).eval()).real();
    return out;
}

inline ShiftedCharacteristics shift_characteristics(const LevyCharacteristics &c, double eta) {
    return shift_characteristics(c, vec1(eta));
}

/// Rebuilds a model from its serialized record.
inline LevyModel model_from_json(const Json &j) {
    const std::string fam = j.at("family").get<std::string>();
    auto drift_mode = [&j]() {
        const std::string mode = j.value("drift_mode", std::string("explicit"));
        if (mode == "martingale") return DriftMode::martingale(j.at("rate").get<double>());
        if (mode == "zero_truncation") return DriftMode::zero_truncation();
        if (mode == "explicit")
            return DriftMode::explicit_drift(j.value("drift", 0.0),
                                             truncation_from_string(j.value("truncation", std::string("full"))));
        throw ConfigError("unknown drift_mode '" + mode + "'");
    };
    if (fam == "cgmy") {
        return make_cgmy(j.at("c_minus").get<double>(), j.at("c_plus").get<double>(), j.at("G").get<double>(),
                         j.at("M").get<double>(), j.at("y_minus").get<double>(), j.at("y_plus").get<double>(),
                         drift_mode());
    }
    if (fam == "nig") {
        return make_nig(j.at("alpha").get<double>(), detail::vec_from_json(j.at("beta")), j.at("delta").get<double>(),
                        detail::vec_from_json(j.at("mu")), detail::mat_from_json(j.at("shape")));
    }
    if (fam == "brownian") {
        return make_jump_diffusion(detail::vec_from_json(j.at("drift")), detail::mat_from_json(j.at("covariance")));
    }
    if (fam == "compound_poisson") {
        return make_compound_poisson(j.at("intensity").get<double>(), j.at("mean").get<double>(),
                                     j.at("stddev").get<double>(), j.value("drift", 0.0));
    }
    if (fam == "constant") return make_constant(j.at("value").get<double>(), j.value("dim", 1));
    if (fam == "triplet") {
        LevyCharacteristics c;
        c.drift = detail::vec_from_json(j.at("drift"));
        c.covariance = detail::mat_from_json(j.at("covariance"));
        c.measure = detail::measure_from_json(j.at("measure"));
        c.truncation = truncation_from_string(j.at("truncation").get<std::string>());
        c.killing = j.value("killing", 0.0);
        return make_model(c);
    }
    if (fam == "sum") {
        const auto &p = j.at("parts");
        require(p.size() >= 1, "sum: no parts");
        LevyModel m = model_from_json(p[0]);
        for (std::size_t i = 1; i < p.size(); ++i) m = sum_symbols(m, model_from_json(p[i]));
        return m;
    }
    if (fam == "piecewise") {
        std::vector<LevyModel> segs;
        for (const auto &s : j.at("segments")) segs.push_back(model_from_json(s));
        return with_time_params(std::move(segs), j.at("breaks").get<std::vector<double>>(),
                                j.value("right_continuous", true));
    }
    if (fam == "integrand") {
        TimeParameterPath f;
        f.breaks = j.at("breaks").get<std::vector<double>>();
        for (const auto &v : j.at("values")) f.values.push_back(detail::mat_from_json(v));
        return with_integrand(model_from_json(j.at("base")), f);
    }
    throw ConfigError("unknown model family '" + fam + "'");
}

}  // namespace fkpide
