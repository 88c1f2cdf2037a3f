#pragma once

// Selfadjoint noncommutative polynomials over x_1..x_p (selfadjoint) and
// y_1..y_q, y_1*..y_q*. Terms are kept in canonical graded-lexicographic
// order so selfadjointness is decidable by termwise comparison.

#include <cctype>
#include <complex>
#include <cstdlib>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "freespec/linalg.hpp"

namespace freespec {

enum class LetterKind : int { X = 0, Y = 1, YStar = 2 };

struct Letter {
    LetterKind kind = LetterKind::X;
    int index = 1;  // 1-based

    friend bool operator==(const Letter& a, const Letter& b) {
        return a.kind == b.kind && a.index == b.index;
    }
    friend bool operator<(const Letter& a, const Letter& b) {
        if (a.kind != b.kind) return static_cast<int>(a.kind) < static_cast<int>(b.kind);
        return a.index < b.index;
    }
};

using Word = std::vector<Letter>;

struct WordLess {
    bool operator()(const Word& a, const Word& b) const {
        if (a.size() != b.size()) return a.size() < b.size();
        return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
    }
};

inline Letter letter_star(Letter l, bool hermitian_y) {
    if (l.kind == LetterKind::Y && !hermitian_y) l.kind = LetterKind::YStar;
    else if (l.kind == LetterKind::YStar) l.kind = LetterKind::Y;
    return l;
}

inline Word word_star(const Word& w, bool hermitian_y) {
    Word out(w.rbegin(), w.rend());
    for (Letter& l : out) l = letter_star(l, hermitian_y);
    return out;
}

class NCPolynomial {
public:
    using TermMap = std::map<Word, Complex, WordLess>;

    NCPolynomial() = default;

    static NCPolynomial constant(Complex c) {
        NCPolynomial p;
        if (c != Complex(0.0)) p.terms_[Word{}] = c;
        return p;
    }
    static NCPolynomial letter(Letter l) {
        NCPolynomial p;
        p.terms_[Word{l}] = Complex(1.0);
        return p;
    }
    static NCPolynomial x(int i) { return letter({LetterKind::X, i}); }
    static NCPolynomial y(int i) { return letter({LetterKind::Y, i}); }
    static NCPolynomial ystar(int i) { return letter({LetterKind::YStar, i}); }

    const TermMap& terms() const { return terms_; }
    bool hermitian_y() const { return hermitian_y_; }

    void add_term(const Word& w, Complex c) {
        auto it = terms_.find(w);
        if (it == terms_.end()) {
            if (c != Complex(0.0)) terms_[w] = c;
        } else {
            it->second += c;
            if (std::abs(it->second) == 0.0) terms_.erase(it);
        }
    }

    int degree() const {
        int d = 0;
        for (const auto& [w, c] : terms_) d = std::max<int>(d, int(w.size()));
        return d;
    }
    // Smallest (p, q) the polynomial can be evaluated against.
    int required_x() const {
        int n = 0;
        for (const auto& [w, c] : terms_)
            for (const Letter& l : w)
                if (l.kind == LetterKind::X) n = std::max(n, l.index);
        return n;
    }
    int required_y() const {
        int n = 0;
        for (const auto& [w, c] : terms_)
            for (const Letter& l : w)
                if (l.kind != LetterKind::X) n = std::max(n, l.index);
        return n;
    }

    NCPolynomial& operator+=(const NCPolynomial& o) {
        for (const auto& [w, c] : o.terms_) add_term(w, c);
        return *this;
    }
    NCPolynomial& operator-=(const NCPolynomial& o) {
        for (const auto& [w, c] : o.terms_) add_term(w, -c);
        return *this;
    }
    friend NCPolynomial operator+(NCPolynomial a, const NCPolynomial& b) { return a += b; }
    friend NCPolynomial operator-(NCPolynomial a, const NCPolynomial& b) { return a -= b; }
    friend NCPolynomial operator*(Complex s, const NCPolynomial& p) {
        NCPolynomial out;
        out.hermitian_y_ = p.hermitian_y_;
        if (s == Complex(0.0)) return out;
        for (const auto& [w, c] : p.terms_) out.terms_[w] = s * c;
        return out;
    }
    friend NCPolynomial operator*(const NCPolynomial& a, const NCPolynomial& b) {
        NCPolynomial out;
        out.hermitian_y_ = a.hermitian_y_ || b.hermitian_y_;
        for (const auto& [wa, ca] : a.terms_)
            for (const auto& [wb, cb] : b.terms_) {
                Word w = wa;
                w.insert(w.end(), wb.begin(), wb.end());
                out.add_term(w, ca * cb);
            }
        return out;
    }

    // Formal adjoint: reverse each word, star each letter, conjugate coefficients.
    NCPolynomial adjoint() const {
        NCPolynomial out;
        out.hermitian_y_ = hermitian_y_;
        for (const auto& [w, c] : terms_) out.add_term(word_star(w, hermitian_y_), std::conj(c));
        return out;
    }

    // Rewrite y_j* as y_j; valid when the deterministic inputs are Hermitian.
    NCPolynomial assuming_hermitian_y() const {
        NCPolynomial out;
        out.hermitian_y_ = true;
        for (const auto& [w, c] : terms_) {
            Word nw = w;
            for (Letter& l : nw)
                if (l.kind == LetterKind::YStar) l.kind = LetterKind::Y;
            out.add_term(nw, c);
        }
        return out;
    }

    bool is_selfadjoint(double tol = 1e-12) const {
        NCPolynomial diff = *this - adjoint();
        double scale = 1.0;
        for (const auto& [w, c] : terms_) scale = std::max(scale, std::abs(c));
        for (const auto& [w, c] : diff.terms_)
            if (std::abs(c) > tol * scale) return false;
        return true;
    }

    // Literal word-by-word evaluation; y_j* uses the adjoint of Y[j]. The
    // dimension hint is needed only when both input families are empty.
    CMatrix evaluate(const std::vector<HermMatrix>& X, const std::vector<CMatrix>& Y,
                     Eigen::Index dim_hint = 0) const {
        if (required_x() > int(X.size()) || required_y() > int(Y.size()))
            throw ConfigError("NCPolynomial::evaluate: not enough input matrices");
        Eigen::Index n = dim_hint;
        for (const auto& m : X) n = std::max(n, m.dim());
        for (const auto& m : Y) n = std::max(n, m.rows());
        if (n == 0) throw ConfigError("NCPolynomial::evaluate: empty input family");
        for (const auto& m : X)
            if (m.dim() != n) throw ConfigError("NCPolynomial::evaluate: dimension mismatch");
        for (const auto& m : Y)
            if (m.rows() != n || m.cols() != n) throw ConfigError("NCPolynomial::evaluate: dimension mismatch");
        CMatrix acc = CMatrix::Zero(n, n);
        for (const auto& [w, c] : terms_) {
            CMatrix prod = CMatrix::Identity(n, n);
            for (const Letter& l : w) {
                switch (l.kind) {
                    case LetterKind::X: prod = prod * X[l.index - 1].mat(); break;
                    case LetterKind::Y: prod = prod * Y[l.index - 1]; break;
                    case LetterKind::YStar: prod = prod * Y[l.index - 1].adjoint(); break;
                }
            }
            acc += c * prod;
        }
        return acc;
    }

    // Structural substitution letter -> polynomial over a new alphabet.
    NCPolynomial substitute(const std::function<NCPolynomial(const Letter&)>& image) const {
        NCPolynomial out;
        for (const auto& [w, c] : terms_) {
            NCPolynomial prod = NCPolynomial::constant(1.0);
            for (const Letter& l : w) prod = prod * image(l);
            out += c * prod;
        }
        return out;
    }

    std::string to_string() const {
        if (terms_.empty()) return "0";
        std::ostringstream os;
        bool first = true;
        for (const auto& [w, c] : terms_) {
            if (!first) os << " + ";
            first = false;
            os << "(" << c.real();
            if (c.imag() != 0.0) os << (c.imag() > 0 ? "+" : "") << c.imag() << "i";
            os << ")";
            for (const Letter& l : w) {
                os << "*" << (l.kind == LetterKind::X ? "x" : "y") << l.index
                   << (l.kind == LetterKind::YStar ? "*" : "");
            }
        }
        return os.str();
    }

private:
    TermMap terms_;
    bool hermitian_y_ = false;
};

// Text grammar for the CLI: terms like "2.5*x1*y1*x1 + h.c."; the token
// "h.c." adds the adjoint of everything parsed before it. Numeric factors may
// carry a trailing "i" for the imaginary unit; letters are x<k>, y<k>, y<k>*.
inline NCPolynomial parse_polynomial(const std::string& text) {
    NCPolynomial acc;
    size_t pos = 0;
    auto skip_ws = [&] { while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos]))) ++pos; };
    auto fail = [&](const std::string& what) -> ConfigError {
        return ConfigError("parse_polynomial: " + what + " at position " + std::to_string(pos) +
                           " in \"" + text + "\"");
    };

    skip_ws();
    if (pos == text.size()) throw fail("empty polynomial");
    bool expect_term = true;
    double sign = 1.0;
    while (pos < text.size()) {
        skip_ws();
        if (pos == text.size()) break;
        if (expect_term) {
            if (text.compare(pos, 4, "h.c.") == 0) {
                pos += 4;
                acc += Complex(sign) * acc.adjoint();
                expect_term = false;
                continue;
            }
            // one term: product of factors
            Complex coeff(sign);
            Word word;
            bool any_factor = false;
            for (;;) {
                skip_ws();
                if (pos >= text.size()) break;
                const char c = text[pos];
                if (c == 'x' || c == 'y') {
                    ++pos;
                    size_t start = pos;
                    while (pos < text.size() && std::isdigit(static_cast<unsigned char>(text[pos]))) ++pos;
                    if (start == pos) throw fail("expected index after letter");
                    const int idx = std::atoi(text.substr(start, pos - start).c_str());
                    if (idx < 1) throw fail("letter index must be >= 1");
                    LetterKind kind = (c == 'x') ? LetterKind::X : LetterKind::Y;
                    if (c == 'y' && pos < text.size() && text[pos] == '*' ) {
                        // star belongs to the letter only if not followed by another factor start;
                        // "y1*x1" means y1 times x1, "y1* * x1" or trailing "y1*" means adjoint letter.
                        size_t look = pos + 1;
                        while (look < text.size() && std::isspace(static_cast<unsigned char>(text[look]))) ++look;
                        const bool times = look < text.size() && (std::isalnum(static_cast<unsigned char>(text[look])) ||
                                                                  text[look] == '.' );
                        if (!times) { kind = LetterKind::YStar; ++pos; }
                    }
                    word.push_back({kind, idx});
                    any_factor = true;
                } else if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
                    char* end = nullptr;
                    const double val = std::strtod(text.c_str() + pos, &end);
                    pos = size_t(end - text.c_str());
                    if (pos < text.size() && text[pos] == 'i') { coeff *= Complex(0.0, val); ++pos; }
                    else coeff *= val;
                    any_factor = true;
                } else if (c == 'i' && (pos + 1 >= text.size() || !std::isalnum(static_cast<unsigned char>(text[pos + 1])))) {
                    coeff *= Complex(0.0, 1.0);
                    ++pos;
                    any_factor = true;
                } else {
                    break;
                }
                skip_ws();
                if (pos < text.size() && text[pos] == '*') {
                    // separator between factors (letter stars were consumed above)
                    size_t look = pos + 1;
                    while (look < text.size() && std::isspace(static_cast<unsigned char>(text[look]))) ++look;
                    if (look < text.size() && (std::isalnum(static_cast<unsigned char>(text[look])) || text[look] == '.')) {
                        pos = pos + 1;
                        continue;
                    }
                }
                // no explicit separator: allow juxtaposition ending the term on +/-
                if (pos >= text.size() || text[pos] == '+' || text[pos] == '-') break;
            }
            if (!any_factor) throw fail("expected a term");
            acc.add_term(word, coeff);
            expect_term = false;
        } else {
            const char c = text[pos];
            if (c == '+') { sign = 1.0; ++pos; expect_term = true; }
            else if (c == '-') { sign = -1.0; ++pos; expect_term = true; }
            else throw fail("expected '+' or '-'");
        }
    }
    if (expect_term) throw fail("dangling operator");
    return acc;
}

}  // namespace freespec
