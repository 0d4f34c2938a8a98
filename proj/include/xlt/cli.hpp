#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace xlt::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Runs one `xlt` command line (without the program name).
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Subcommands that accept --seed; the recipe runner supplies one per stage.
bool takes_seed(const std::string& command);

struct RecipeStage {
  std::string name;
  std::string command;
  /// flag -> values; a bool flag is stored as {"true"} / {"false"}.
  std::map<std::string, std::vector<std::string>> args;
  std::map<std::string, std::string> outputs;  // key -> file name in the stage directory
};

struct Recipe {
  std::string name;
  std::uint64_t seed = 1;
  std::map<std::string, std::filesystem::path> externals;  // resolved against the recipe's directory
  std::vector<RecipeStage> stages;

  static Recipe parse(const std::string& json_text, const std::filesystem::path& base_dir);
  static Recipe load(const std::filesystem::path& path);

  /// Checks commands, references and externals before anything runs.
  void validate() const;
};

struct RecipeRunOptions {
  std::filesystem::path runs_dir = "runs";
  std::optional<std::uint64_t> seed;
};

/// Runs stages in order under runs_dir/<recipe>/<stage>/, skipping stages
/// whose manifest matches their resolved arguments and output hashes.
int run_recipe(const Recipe& recipe, const RecipeRunOptions& options, std::ostream& out, std::ostream& err);

}  // namespace xlt::cli
