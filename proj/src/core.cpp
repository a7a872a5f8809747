#include "mad/core.hpp"

#include "mad/errors.hpp"

#include <algorithm>
#include <cctype>
#include <regex>

namespace mad {

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && is_space(s[b])) ++b;
    while (e > b && is_space(s[e - 1])) --e;
    return std::string(s.substr(b, e - b));
}

std::string collapse_ws(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    bool in_ws = false;
    for (char c : s) {
        if (is_space(c)) {
            in_ws = true;
        } else {
            if (in_ws && !out.empty()) out.push_back(' ');
            in_ws = false;
            out.push_back(c);
        }
    }
    return out;
}

// Trailing punctuation strip. Closers are only stripped when their opener is
// absent, so "(x+1)" survives but "b)" loses the parenthesis.
std::string strip_trailing_punct(std::string s) {
    const std::string plain = ".,;:!?'\"";
    for (;;) {
        if (s.empty()) break;
        char c = s.back();
        if (plain.find(c) != std::string::npos) {
            s.pop_back();
            continue;
        }
        char opener = 0;
        if (c == ')') opener = '(';
        if (c == ']') opener = '[';
        if (c == '}') opener = '{';
        if (opener != 0 && s.find(opener) == std::string::npos) {
            s.pop_back();
            continue;
        }
        break;
    }
    return trim(s);
}

// "7", "007", "7.0", "-0", ".5", "+12" -> canonical decimal string, or
// nullopt when the input is not a plain decimal literal.
std::optional<std::string> normalize_number(const std::string& s) {
    static const std::regex re(R"(^([+-]?)(\d*)(?:\.(\d*))?$)");
    std::smatch m;
    if (!std::regex_match(s, m, re)) return std::nullopt;
    std::string sign = m[1].str();
    std::string ip = m[2].str();
    std::string fp = m[3].str();
    if (ip.empty() && fp.empty()) return std::nullopt;  // ".", "+", "-"
    // strip leading zeros
    std::size_t nz = ip.find_first_not_of('0');
    ip = (nz == std::string::npos) ? "0" : ip.substr(nz);
    if (ip.empty()) ip = "0";
    // strip trailing zeros in the fraction
    std::size_t fz = fp.find_last_not_of('0');
    fp = (fz == std::string::npos) ? "" : fp.substr(0, fz + 1);
    std::string out = ip;
    if (!fp.empty()) out += "." + fp;
    if (sign == "-" && out != "0") out = "-" + out;
    return out;
}

}  // namespace

AnswerLabel canonicalize(std::string_view raw) {
    AnswerLabel label;
    label.raw = std::string(raw);

    std::string s = trim(raw);
    s = strip_trailing_punct(s);
    s = collapse_ws(s);
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });

    if (s.empty()) {
        label.canonical.clear();  // EMPTY
        return label;
    }

    // Multiple-choice letter, optionally parenthesized: "b", "(b)" -> "B".
    static const std::regex choice_re(R"(^\(?([a-z])\)?$)");
    std::smatch m;
    if (std::regex_match(s, m, choice_re)) {
        label.canonical = std::string(1, static_cast<char>(std::toupper(m[1].str()[0])));
        return label;
    }

    if (auto num = normalize_number(s)) {
        label.canonical = *num;
        return label;
    }

    label.canonical = s;
    return label;
}

bool answers_equal(const AnswerLabel& a, const AnswerLabel& b) {
    return a.canonical == b.canonical;
}

AnswerLabel extract_answer(const std::string& reasoning) {
    static const std::regex re(R"(answer\s*[:=]\s*([^\n\r]*))", std::regex::icase);
    auto begin = std::sregex_iterator(reasoning.begin(), reasoning.end(), re);
    auto end = std::sregex_iterator();
    std::string last;
    bool found = false;
    for (auto it = begin; it != end; ++it) {
        last = (*it)[1].str();
        found = true;
    }
    if (!found) return canonicalize("");
    return canonicalize(last);
}

std::string to_string(TerminationReason r) {
    switch (r) {
        case TerminationReason::Accepted: return "accepted";
        case TerminationReason::BudgetExhausted: return "budget_exhausted";
        case TerminationReason::Consensus: return "consensus";
    }
    return "unknown";
}

TerminationReason termination_reason_from_string(const std::string& s) {
    if (s == "accepted") return TerminationReason::Accepted;
    if (s == "budget_exhausted") return TerminationReason::BudgetExhausted;
    if (s == "consensus") return TerminationReason::Consensus;
    throw ParseError("unknown termination reason: " + s, 0);
}

std::string to_string(PriorSignalKind k) {
    switch (k) {
        case PriorSignalKind::MinLL: return "min_ll";
        case PriorSignalKind::PPL: return "ppl";
        case PriorSignalKind::Conf: return "conf";
    }
    return "unknown";
}

PriorSignalKind prior_signal_from_string(const std::string& s) {
    if (s == "min_ll") return PriorSignalKind::MinLL;
    if (s == "ppl") return PriorSignalKind::PPL;
    if (s == "conf") return PriorSignalKind::Conf;
    throw ConfigError("unknown prior signal: " + s);
}

}  // namespace mad
