#include "polyfilt/polynomial.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "polyfilt/error.hpp"

namespace polyfilt {

// ---------------------------------------------------------------------------
// Monomial

Monomial::Monomial(std::vector<int> exponents) : exps_(std::move(exponents))
{
    for (int e : exps_)
    {
        if (e < 0)
        {
            throw std::invalid_argument("Monomial: negative exponent");
        }
    }
    degree_ = std::accumulate(exps_.begin(), exps_.end(), 0);
}

Monomial::Monomial(std::initializer_list<int> exponents) : Monomial(std::vector<int>(exponents)) {}

Monomial Monomial::one(std::size_t n_vars)
{
    return Monomial(std::vector<int>(n_vars, 0));
}

Monomial Monomial::variable(std::size_t n_vars, std::size_t var)
{
    require_dims(var < n_vars, "Monomial::variable: index out of range");
    std::vector<int> e(n_vars, 0);
    e[var] = 1;
    return Monomial(std::move(e));
}

Monomial Monomial::operator*(const Monomial& other) const
{
    require_dims(n_vars() == other.n_vars(), "Monomial product: variable count mismatch");
    Monomial out = *this;
    for (std::size_t i = 0; i < exps_.size(); ++i)
    {
        out.exps_[i] += other.exps_[i];
    }
    out.degree_ = degree_ + other.degree_;
    return out;
}

double Monomial::evaluate(std::span<const double> point) const
{
    require_dims(point.size() == exps_.size(), "Monomial::evaluate: point dimension mismatch");
    double v = 1.0;
    for (std::size_t i = 0; i < exps_.size(); ++i)
    {
        for (int k = 0; k < exps_[i]; ++k)
        {
            v *= point[i];
        }
    }
    return v;
}

std::string Monomial::to_string() const
{
    if (degree_ == 0)
    {
        return "1";
    }
    std::ostringstream os;
    bool first = true;
    for (std::size_t i = 0; i < exps_.size(); ++i)
    {
        if (exps_[i] == 0)
        {
            continue;
        }
        if (!first)
        {
            os << '*';
        }
        first = false;
        os << 'x' << (i + 1);
        if (exps_[i] > 1)
        {
            os << '^' << exps_[i];
        }
    }
    return os.str();
}

bool GradedLexLess::operator()(const Monomial& a, const Monomial& b) const
{
    if (a.degree() != b.degree())
    {
        return a.degree() < b.degree();
    }
    // Within a degree the monomial with the larger leading exponent comes first.
    const auto& ea = a.exponents();
    const auto& eb = b.exponents();
    const std::size_t n = std::min(ea.size(), eb.size());
    for (std::size_t i = 0; i < n; ++i)
    {
        if (ea[i] != eb[i])
        {
            return ea[i] > eb[i];
        }
    }
    return ea.size() < eb.size();
}

// ---------------------------------------------------------------------------
// MonomialBasis

namespace {

// All exponent vectors of n variables with total degree exactly `deg`, in descending lex order.
void exact_degree(std::size_t n, int deg, std::vector<int>& cur, std::size_t pos,
                  std::vector<Monomial>& out)
{
    if (pos + 1 == n)
    {
        cur[pos] = deg;
        out.emplace_back(cur);
        return;
    }
    for (int e = deg; e >= 0; --e)
    {
        cur[pos] = e;
        exact_degree(n, deg - e, cur, pos + 1, out);
    }
    cur[pos] = 0;
}

}  // namespace

MonomialBasis::MonomialBasis(std::size_t n_vars, int max_degree) : n_vars_(n_vars), max_degree_(max_degree)
{
    if (n_vars == 0 || max_degree < 0)
    {
        throw std::invalid_argument("monomial_basis: need n_vars >= 1 and degree >= 0");
    }
    monomials_.reserve(binomial(n_vars + static_cast<std::size_t>(max_degree), static_cast<std::size_t>(max_degree)));
    std::vector<int> cur(n_vars, 0);
    for (int d = 0; d <= max_degree; ++d)
    {
        exact_degree(n_vars, d, cur, 0, monomials_);
    }
    for (std::size_t i = 0; i < monomials_.size(); ++i)
    {
        index_.emplace(monomials_[i], i);
    }
}

long MonomialBasis::index_of(const Monomial& m) const
{
    auto it = index_.find(m);
    return it == index_.end() ? -1 : static_cast<long>(it->second);
}

Eigen::VectorXd MonomialBasis::evaluate(std::span<const double> point) const
{
    require_dims(point.size() == n_vars_, "MonomialBasis::evaluate: point dimension mismatch");
    Eigen::VectorXd q(static_cast<Eigen::Index>(monomials_.size()));
    for (std::size_t i = 0; i < monomials_.size(); ++i)
    {
        q[static_cast<Eigen::Index>(i)] = monomials_[i].evaluate(point);
    }
    return q;
}

MonomialBasis monomial_basis(std::size_t n_vars, int degree)
{
    return MonomialBasis(n_vars, degree);
}

std::size_t binomial(std::size_t n, std::size_t k)
{
    if (k > n)
    {
        return 0;
    }
    k = std::min(k, n - k);
    std::size_t r = 1;
    for (std::size_t i = 1; i <= k; ++i)
    {
        r = r * (n - k + i) / i;
    }
    return r;
}

// ---------------------------------------------------------------------------
// Polynomial

Polynomial::Polynomial(std::size_t n_vars) : n_vars_(n_vars) {}

Polynomial::Polynomial(std::size_t n_vars, TermMap terms) : n_vars_(n_vars), terms_(std::move(terms))
{
    for (const auto& [m, c] : terms_)
    {
        require_dims(m.n_vars() == n_vars_, "Polynomial: monomial length differs from n_vars");
    }
    normalize();
}

Polynomial Polynomial::constant(std::size_t n_vars, double value)
{
    TermMap t;
    t.emplace(Monomial::one(n_vars), value);
    return Polynomial(n_vars, std::move(t));
}

Polynomial Polynomial::variable(std::size_t n_vars, std::size_t var)
{
    TermMap t;
    t.emplace(Monomial::variable(n_vars, var), 1.0);
    return Polynomial(n_vars, std::move(t));
}

Polynomial Polynomial::monomial(const Monomial& m, double coef)
{
    TermMap t;
    t.emplace(m, coef);
    return Polynomial(m.n_vars(), std::move(t));
}

Polynomial Polynomial::affine(std::span<const double> linear, double constant)
{
    const std::size_t n = linear.size();
    TermMap t;
    t.emplace(Monomial::one(n), constant);
    for (std::size_t i = 0; i < n; ++i)
    {
        t.emplace(Monomial::variable(n, i), linear[i]);
    }
    return Polynomial(n, std::move(t));
}

void Polynomial::normalize()
{
    std::erase_if(terms_, [](const auto& kv) { return !(std::abs(kv.second) >= kPruneThreshold); });
}

int Polynomial::degree() const
{
    // Terms are graded-ordered, so the last one has the highest degree.
    return terms_.empty() ? 0 : terms_.rbegin()->first.degree();
}

double Polynomial::coefficient(const Monomial& m) const
{
    auto it = terms_.find(m);
    return it == terms_.end() ? 0.0 : it->second;
}

double Polynomial::evaluate(std::span<const double> point) const
{
    require_dims(point.size() == n_vars_, "Polynomial::evaluate: point dimension mismatch");
    double s = 0.0;
    for (const auto& [m, c] : terms_)
    {
        s += c * m.evaluate(point);
    }
    return s;
}

Polynomial Polynomial::operator+(const Polynomial& q) const
{
    require_dims(n_vars_ == q.n_vars_, "Polynomial add: variable count mismatch");
    TermMap t = terms_;
    for (const auto& [m, c] : q.terms_)
    {
        t[m] += c;
    }
    return Polynomial(n_vars_, std::move(t));
}

Polynomial Polynomial::operator-(const Polynomial& q) const
{
    return *this + (-q);
}

Polynomial Polynomial::operator-() const
{
    return *this * -1.0;
}

Polynomial Polynomial::operator*(const Polynomial& q) const
{
    require_dims(n_vars_ == q.n_vars_, "Polynomial multiply: variable count mismatch");
    TermMap t;
    for (const auto& [ma, ca] : terms_)
    {
        for (const auto& [mb, cb] : q.terms_)
        {
            t[ma * mb] += ca * cb;
        }
    }
    return Polynomial(n_vars_, std::move(t));
}

Polynomial Polynomial::operator*(double c) const
{
    TermMap t = terms_;
    for (auto& [m, v] : t)
    {
        v *= c;
    }
    return Polynomial(n_vars_, std::move(t));
}

Polynomial Polynomial::pow(int k) const
{
    if (k < 0)
    {
        throw std::invalid_argument("Polynomial::pow: negative exponent");
    }
    Polynomial result = constant(n_vars_, 1.0);
    Polynomial base = *this;
    while (k > 0)
    {
        if (k & 1)
        {
            result = result * base;
        }
        k >>= 1;
        if (k > 0)
        {
            base = base * base;
        }
    }
    return result;
}

Polynomial Polynomial::substitute(const std::vector<Polynomial>& images) const
{
    require_dims(images.size() == n_vars_, "substitute: need one image per variable");
    if (images.empty())
    {
        throw DimensionError("substitute: no images");
    }
    const std::size_t n_out = images.front().n_vars();
    for (const auto& im : images)
    {
        require_dims(im.n_vars() == n_out, "substitute: images disagree on variable count");
    }

    // powers[i][k] = images[i]^k, filled lazily
    std::vector<std::vector<Polynomial>> powers(n_vars_);
    auto power = [&](std::size_t i, int k) -> const Polynomial& {
        auto& cache = powers[i];
        if (cache.empty())
        {
            cache.push_back(constant(n_out, 1.0));
        }
        while (static_cast<int>(cache.size()) <= k)
        {
            cache.push_back(cache.back() * images[i]);
        }
        return cache[static_cast<std::size_t>(k)];
    };

    Polynomial result(n_out);
    for (const auto& [m, c] : terms_)
    {
        Polynomial term = constant(n_out, c);
        for (std::size_t i = 0; i < n_vars_; ++i)
        {
            if (m[i] > 0)
            {
                term = term * power(i, m[i]);
            }
        }
        result = result + term;
    }
    return result;
}

Polynomial Polynomial::embed(std::size_t n_vars_out, std::span<const std::size_t> var_map) const
{
    require_dims(var_map.size() == n_vars_, "embed: need one target index per variable");
    TermMap t;
    for (const auto& [m, c] : terms_)
    {
        std::vector<int> e(n_vars_out, 0);
        for (std::size_t i = 0; i < n_vars_; ++i)
        {
            require_dims(var_map[i] < n_vars_out, "embed: target index out of range");
            e[var_map[i]] += m[i];
        }
        t[Monomial(std::move(e))] += c;
    }
    return Polynomial(n_vars_out, std::move(t));
}

double Polynomial::max_abs_coefficient() const
{
    double r = 0.0;
    for (const auto& [m, c] : terms_)
    {
        r = std::max(r, std::abs(c));
    }
    return r;
}

bool Polynomial::operator==(const Polynomial& q) const
{
    return n_vars_ == q.n_vars_ && terms_ == q.terms_;
}

std::string Polynomial::to_string() const
{
    if (terms_.empty())
    {
        return "0";
    }
    std::ostringstream os;
    os.precision(17);
    bool first = true;
    for (const auto& [m, c] : terms_)
    {
        if (!first)
        {
            os << (c < 0 ? " - " : " + ");
        }
        else if (c < 0)
        {
            os << '-';
        }
        first = false;
        os << std::abs(c);
        if (m.degree() > 0)
        {
            os << '*' << m.to_string();
        }
    }
    return os.str();
}

Polynomial operator*(double c, const Polynomial& p)
{
    return p * c;
}

Polynomial add(const Polynomial& p, const Polynomial& q) { return p + q; }
Polynomial scale(const Polynomial& p, double c) { return p * c; }
Polynomial multiply(const Polynomial& p, const Polynomial& q) { return p * q; }
double evaluate(const Polynomial& p, std::span<const double> point) { return p.evaluate(point); }
Polynomial substitute(const Polynomial& p, const std::vector<Polynomial>& images) { return p.substitute(images); }

// ---------------------------------------------------------------------------
// Gram expansion

GramMap gram_linear_map(const MonomialBasis& basis)
{
    GramMap map;
    for (std::size_t i = 0; i < basis.size(); ++i)
    {
        for (std::size_t j = 0; j <= i; ++j)
        {
            map[basis[i] * basis[j]].push_back({i, j, i == j ? 1.0 : 2.0});
        }
    }
    return map;
}

Polynomial gram_expand(const MonomialBasis& basis, const Eigen::MatrixXd& Q)
{
    const auto n = static_cast<Eigen::Index>(basis.size());
    require_dims(Q.rows() == n && Q.cols() == n, "gram_expand: Gram side differs from basis size");
    Polynomial::TermMap t;
    for (const auto& [m, entries] : gram_linear_map(basis))
    {
        double c = 0.0;
        for (const auto& e : entries)
        {
            const auto r = static_cast<Eigen::Index>(e.row);
            const auto k = static_cast<Eigen::Index>(e.col);
            // average the two triangles so a slightly asymmetric Q is read consistently
            c += e.weight * 0.5 * (Q(r, k) + Q(k, r));
        }
        t.emplace(m, c);
    }
    return Polynomial(basis.n_vars(), std::move(t));
}

// ---------------------------------------------------------------------------
// JSON

void to_json(nlohmann::json& j, const Polynomial& p)
{
    nlohmann::json terms = nlohmann::json::array();
    for (const auto& [m, c] : p.terms())
    {
        terms.push_back({{"exps", m.exponents()}, {"coef", c}});
    }
    j = nlohmann::json{{"n_vars", p.n_vars()}, {"terms", std::move(terms)}};
}

void from_json(const nlohmann::json& j, Polynomial& p)
{
    const auto n = j.at("n_vars").get<std::size_t>();
    Polynomial::TermMap t;
    for (const auto& term : j.at("terms"))
    {
        auto e = term.at("exps").get<std::vector<int>>();
        require_dims(e.size() == n, "polynomial JSON: exps length differs from n_vars");
        t[Monomial(std::move(e))] += term.at("coef").get<double>();
    }
    p = Polynomial(n, std::move(t));
}

}  // namespace polyfilt
