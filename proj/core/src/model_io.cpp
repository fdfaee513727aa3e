#include "qnd/model_io.hpp"

#include <cctype>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <optional>
#include <sstream>

namespace qnd {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

std::vector<std::string> splitOn(const std::string& s, char sep) {
    std::vector<std::string> parts;
    std::string cur;
    for (char ch : s) {
        if (ch == sep) {
            parts.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(ch);
        }
    }
    parts.push_back(cur);
    return parts;
}

}  // namespace

std::vector<KvSection> parseKvText(const std::string& text) {
    std::vector<KvSection> sections;
    std::istringstream in(text);
    std::string raw;
    int lineNo = 0;
    while (std::getline(in, raw)) {
        ++lineNo;
        const auto hash = raw.find('#');
        if (hash != std::string::npos) raw.erase(hash);
        const std::string line = trim(raw);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ConfigError("unterminated section header", lineNo);
            KvSection sec;
            sec.name = trim(line.substr(1, line.size() - 2));
            sec.line = lineNo;
            if (sec.name.empty()) throw ConfigError("empty section name", lineNo);
            sections.push_back(std::move(sec));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("expected 'key = value' or '[section]'", lineNo);
        if (sections.empty())
            throw ConfigError("key outside of any section", lineNo);
        KvEntry e;
        e.key = trim(line.substr(0, eq));
        e.value = trim(line.substr(eq + 1));
        e.line = lineNo;
        if (e.key.empty()) throw ConfigError("empty key", lineNo);
        sections.back().entries.push_back(std::move(e));
    }
    return sections;
}

std::string readTextFile(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

namespace {

double parseDoubleStrict(const std::string& s, int line) {
    const std::string t = trim(s);
    if (t.empty()) throw ConfigError("empty number", line);
    char* end = nullptr;
    const double v = std::strtod(t.c_str(), &end);
    if (end != t.c_str() + t.size())
        throw ConfigError("cannot parse number '" + t + "'", line);
    return v;
}

}  // namespace

std::complex<double> parseComplexScalar(const std::string& text, int line) {
    std::string s;
    for (char ch : text)
        if (!std::isspace(static_cast<unsigned char>(ch))) s.push_back(ch);
    if (s.empty()) throw ConfigError("empty complex number", line);
    const char tail = s.back();
    if (tail != 'j' && tail != 'J' && tail != 'i' && tail != 'I')
        return {parseDoubleStrict(s, line), 0.0};
    s.pop_back();
    // find the sign separating real and imaginary parts (not an exponent sign)
    std::size_t split = std::string::npos;
    for (std::size_t k = s.size(); k-- > 1;) {
        if ((s[k] == '+' || s[k] == '-') && s[k - 1] != 'e' && s[k - 1] != 'E') {
            split = k;
            break;
        }
    }
    if (split == std::string::npos) {
        if (s.empty() || s == "+" || s == "-")
            return {0.0, s == "-" ? -1.0 : 1.0};
        return {0.0, parseDoubleStrict(s, line)};
    }
    const std::string re = s.substr(0, split);
    std::string im = s.substr(split);
    if (im == "+" || im == "-") im += "1";
    return {parseDoubleStrict(re, line), parseDoubleStrict(im, line)};
}

double parseRealScalar(const std::string& text, int line) {
    return parseDoubleStrict(text, line);
}

std::vector<double> parseRealList(const std::string& text, int line) {
    std::vector<double> out;
    for (const auto& part : splitOn(text, ','))
        out.push_back(parseDoubleStrict(part, line));
    return out;
}

std::vector<std::complex<double>> parseComplexList(const std::string& text, int line) {
    std::vector<std::complex<double>> out;
    for (const auto& part : splitOn(text, ','))
        out.push_back(parseComplexScalar(part, line));
    return out;
}

Eigen::MatrixXcd parseComplexMatrix(const std::string& text, int line) {
    const auto rows = splitOn(text, ';');
    const std::size_t n = rows.size();
    Eigen::MatrixXcd m(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto entries = parseComplexList(rows[i], line);
        if (entries.size() != n)
            throw ConfigError("matrix row has " + std::to_string(entries.size()) +
                                  " entries, expected " + std::to_string(n),
                              line);
        for (std::size_t j = 0; j < n; ++j) m(i, j) = entries[j];
    }
    return m;
}

GeneralModel parseModelText(const std::string& text) {
    const auto sections = parseKvText(text);

    int dim = 0;
    std::optional<std::vector<double>> epsilon;
    std::optional<Eigen::MatrixXcd> hamiltonian;
    int systemLine = 0;
    std::vector<ChannelKind> kinds;
    std::vector<Eigen::MatrixXcd> ops;
    bool sawSystem = false;

    for (const auto& sec : sections) {
        if (sec.name == "system") {
            if (sawSystem) throw ConfigError("duplicate [system] section", sec.line);
            sawSystem = true;
            systemLine = sec.line;
            for (const auto& e : sec.entries) {
                if (e.key == "dim") {
                    dim = static_cast<int>(parseRealScalar(e.value, e.line));
                    if (dim < 2) throw ConfigError("dim must be >= 2", e.line);
                } else if (e.key == "epsilon") {
                    epsilon = parseRealList(e.value, e.line);
                } else if (e.key == "H") {
                    hamiltonian = parseComplexMatrix(e.value, e.line);
                } else {
                    throw ConfigError("unknown [system] key '" + e.key + "'", e.line);
                }
            }
        } else if (sec.name == "channel") {
            std::optional<ChannelKind> kind;
            std::optional<std::vector<std::complex<double>>> diag;
            std::optional<Eigen::MatrixXcd> full;
            for (const auto& e : sec.entries) {
                if (e.key == "kind") {
                    if (e.value == "diffusive")
                        kind = ChannelKind::Diffusive;
                    else if (e.value == "counting")
                        kind = ChannelKind::Counting;
                    else
                        throw ConfigError("kind must be 'diffusive' or 'counting'", e.line);
                } else if (e.key == "c") {
                    diag = parseComplexList(e.value, e.line);
                } else if (e.key == "C") {
                    full = parseComplexMatrix(e.value, e.line);
                } else {
                    throw ConfigError("unknown [channel] key '" + e.key + "'", e.line);
                }
            }
            if (!kind) throw ConfigError("channel missing 'kind'", sec.line);
            if (diag.has_value() == full.has_value())
                throw ConfigError("channel needs exactly one of 'c' or 'C'", sec.line);
            kinds.push_back(*kind);
            if (diag) {
                Eigen::MatrixXcd op = Eigen::MatrixXcd::Zero(diag->size(), diag->size());
                for (std::size_t a = 0; a < diag->size(); ++a) op(a, a) = (*diag)[a];
                ops.push_back(std::move(op));
            } else {
                ops.push_back(std::move(*full));
            }
        } else {
            throw ConfigError("unknown section [" + sec.name + "]", sec.line);
        }
    }

    if (!sawSystem) throw ConfigError("missing [system] section");
    if (dim == 0) throw ConfigError("missing 'dim'", systemLine);
    if (epsilon && hamiltonian)
        throw ConfigError("[system] must set 'epsilon' or 'H', not both", systemLine);

    Eigen::MatrixXcd H = Eigen::MatrixXcd::Zero(dim, dim);
    if (epsilon) {
        if (static_cast<int>(epsilon->size()) != dim)
            throw ConfigError("epsilon has " + std::to_string(epsilon->size()) +
                                  " entries, expected " + std::to_string(dim),
                              systemLine);
        for (int a = 0; a < dim; ++a) H(a, a) = (*epsilon)[a];
    } else if (hamiltonian) {
        if (hamiltonian->rows() != dim)
            throw ConfigError("H is " + std::to_string(hamiltonian->rows()) + "x" +
                                  std::to_string(hamiltonian->cols()) + ", expected dim " +
                                  std::to_string(dim),
                              systemLine);
        H = std::move(*hamiltonian);
    }
    for (const auto& op : ops)
        if (op.rows() != dim)
            throw ConfigError("channel operator is " + std::to_string(op.rows()) + "x" +
                              std::to_string(op.cols()) + ", expected dim " +
                              std::to_string(dim));
    return GeneralModel::make(std::move(H), std::move(kinds), std::move(ops));
}

GeneralModel loadModelFile(const std::string& path) {
    return parseModelText(readTextFile(path));
}

std::string contentHashHex(const std::string& text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace qnd
