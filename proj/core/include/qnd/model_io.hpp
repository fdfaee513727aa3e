#pragma once

#include <complex>
#include <string>
#include <vector>

#include "qnd/model.hpp"

namespace qnd {

/// One `key = value` entry with its source line (for error messages).
struct KvEntry {
    std::string key;
    std::string value;
    int line = 0;
};

/// One `[name]` section of a key-value file.
struct KvSection {
    std::string name;
    int line = 0;
    std::vector<KvEntry> entries;
};

/// Parses the sectioned key-value grammar shared by model and run-config
/// files. '#' starts a comment, blank lines are skipped, keys must live
/// inside a section. Throws ConfigError with a line number on bad syntax.
std::vector<KvSection> parseKvText(const std::string& text);

std::string readTextFile(const std::string& path);

/// Complex scalar in "re", "re+imj" or "imj" form.
std::complex<double> parseComplexScalar(const std::string& text, int line);

double parseRealScalar(const std::string& text, int line);

std::vector<double> parseRealList(const std::string& text, int line);

std::vector<std::complex<double>> parseComplexList(const std::string& text, int line);

/// Row-major complex matrix; rows separated by ';', entries by ','.
Eigen::MatrixXcd parseComplexMatrix(const std::string& text, int line);

/// Builds a model from the `[system]` / `[channel]` sections. Diagonal
/// models may use `epsilon` and per-channel `c`; dense models use `H` and
/// per-channel `C`. Dimension mismatches are rejected with line numbers.
GeneralModel parseModelText(const std::string& text);

GeneralModel loadModelFile(const std::string& path);

/// FNV-1a 64 over the raw file content, hex-encoded; embedded in artifacts
/// for provenance.
std::string contentHashHex(const std::string& text);

}  // namespace qnd
