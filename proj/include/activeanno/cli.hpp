#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "activeanno/loop.hpp"

namespace activeanno {

// Exit codes shared by every command.
inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;  // bad input or tolerance violation
inline constexpr int kExitRuntime = 2;

int run_cli(int argc, const char* const* argv);
int run_cli(const std::vector<std::string>& args);  // args exclude argv[0]

struct SummaryRow {
  std::string name;
  std::vector<int> labeled;  // training-set size per record
  std::vector<double> test_f1;
  double final_f1 = 0.0;
  // Smallest labeled size whose test F1 reaches 95% of the best final F1
  // across all rows.
  std::optional<int> budget_95;
};

std::vector<SummaryRow> summarize(
    const std::vector<std::pair<std::string, RunManifest>>& runs);
void write_summary_csv(const std::vector<SummaryRow>& rows,
                       const std::filesystem::path& path);
std::string format_summary(const std::vector<SummaryRow>& rows);

}  // namespace activeanno
