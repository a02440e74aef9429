#pragma once

#include "p2pm/runtime.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace p2pm {

struct ManifestEntry {
    std::string file;
    long rows = 0;  // data rows, header excluded
};

struct Manifest {
    std::filesystem::path dir;
    std::vector<ManifestEntry> files;

    [[nodiscard]] long rows(const std::string& file) const;
};

// Writes costs, decisions, trades, SoC, network profiles and convergence
// traces as CSV with 6 decimals, then manifest.json. Throws ConfigError when
// the directory cannot be written.
Manifest persist_results(const RunResult& result, const std::filesystem::path& dir);

}  // namespace p2pm
