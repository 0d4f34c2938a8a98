#include <fstream>
#include <ostream>
#include <regex>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "xlt/cli.hpp"
#include "xlt/hash.hpp"
#include "xlt/random.hpp"

namespace xlt::cli {

namespace {

using json = nlohmann::ordered_json;

const std::set<std::string>& known_commands() {
  static const std::set<std::string> commands{"synth",     "bpe",     "train",  "finetune", "probe",   "verify-scores",
                                              "correlate", "cluster", "select", "evaluate"};
  return commands;
}

/// Flag name used for positional arguments in recipe files.
constexpr const char* kPositional = "_";

const std::regex& reference_pattern() {
  static const std::regex re(R"(\$\{([A-Za-z0-9_-]+)\.([A-Za-z0-9_-]+)\})");
  return re;
}

std::string scalar_text(const json& v, const std::string& where) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  if (v.is_number()) return v.dump();
  throw std::invalid_argument(where + ": argument values must be strings, numbers or booleans");
}

struct Reference {
  std::string scope;
  std::string key;
};

std::vector<Reference> references_in(const std::string& value) {
  std::vector<Reference> out;
  for (std::sregex_iterator it(value.begin(), value.end(), reference_pattern()), end; it != end; ++it) {
    out.push_back({(*it)[1].str(), (*it)[2].str()});
  }
  return out;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

}  // namespace

Recipe Recipe::parse(const std::string& json_text, const std::filesystem::path& base_dir) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("recipe is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw std::invalid_argument("recipe must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (key != "name" && key != "seed" && key != "externals" && key != "stages") {
      throw std::invalid_argument("recipe: unknown key '" + key + "'");
    }
  }
  Recipe r;
  if (!j.contains("name") || !j["name"].is_string()) throw std::invalid_argument("recipe: missing name");
  r.name = j["name"].get<std::string>();
  if (j.contains("seed")) {
    if (!j["seed"].is_number_unsigned()) throw std::invalid_argument("recipe: seed must be a non-negative integer");
    r.seed = j["seed"].get<std::uint64_t>();
  }
  if (j.contains("externals")) {
    for (const auto& [key, value] : j["externals"].items()) {
      if (!value.is_string()) throw std::invalid_argument("recipe: external '" + key + "' must be a path");
      r.externals[key] = (base_dir / value.get<std::string>()).lexically_normal();
    }
  }
  if (!j.contains("stages") || !j["stages"].is_array()) throw std::invalid_argument("recipe: missing stages");
  for (const auto& s : j["stages"]) {
    RecipeStage stage;
    if (!s.contains("name") || !s["name"].is_string()) throw std::invalid_argument("recipe: stage without a name");
    stage.name = s["name"].get<std::string>();
    const std::string where = "stage " + stage.name;
    for (const auto& [key, value] : s.items()) {
      if (key != "name" && key != "command" && key != "args" && key != "outputs") {
        throw std::invalid_argument(where + ": unknown key '" + key + "'");
      }
    }
    if (!s.contains("command") || !s["command"].is_string()) throw std::invalid_argument(where + ": missing command");
    stage.command = s["command"].get<std::string>();
    if (s.contains("args")) {
      for (const auto& [flag, value] : s["args"].items()) {
        auto& vals = stage.args[flag];
        if (value.is_array()) {
          for (const auto& v : value) vals.push_back(scalar_text(v, where));
        } else {
          vals.push_back(scalar_text(value, where));
        }
      }
    }
    if (s.contains("outputs")) {
      for (const auto& [key, value] : s["outputs"].items()) {
        if (!value.is_string()) throw std::invalid_argument(where + ": output '" + key + "' must be a file name");
        stage.outputs[key] = value.get<std::string>();
      }
    }
    r.stages.push_back(std::move(stage));
  }
  return r;
}

Recipe Recipe::load(const std::filesystem::path& path) {
  return parse(read_file(path), path.parent_path());
}

void Recipe::validate() const {
  static const std::regex name_re("[A-Za-z0-9_-]+");
  if (!std::regex_match(name, name_re)) throw std::invalid_argument("recipe: name must match [A-Za-z0-9_-]+");
  if (stages.empty()) throw std::invalid_argument("recipe: no stages");
  for (const auto& [key, path] : externals) {
    if (!std::filesystem::exists(path)) {
      throw std::invalid_argument("recipe: external '" + key + "' not found at " + path.string());
    }
  }
  std::map<std::string, const RecipeStage*> earlier;
  for (const auto& stage : stages) {
    const std::string where = "recipe stage '" + stage.name + "'";
    if (!std::regex_match(stage.name, name_re)) throw std::invalid_argument(where + ": bad stage name");
    if (stage.name == "ext" || stage.name == "self") throw std::invalid_argument(where + ": reserved stage name");
    if (earlier.count(stage.name)) throw std::invalid_argument(where + ": duplicate stage name");
    if (!known_commands().count(stage.command)) {
      throw std::invalid_argument(where + ": unknown command '" + stage.command + "'");
    }
    for (const auto& [key, file] : stage.outputs) {
      if (file.empty() || file.find('/') != std::string::npos || file == "manifest.json" || file == "." ||
          file == "..") {
        throw std::invalid_argument(where + ": output '" + key + "' must be a plain file name");
      }
    }
    for (const auto& [flag, values] : stage.args) {
      if (flag.empty()) throw std::invalid_argument(where + ": empty flag name");
      if (flag == "seed") continue;
      for (const auto& v : values) {
        for (const auto& ref : references_in(v)) {
          if (ref.scope == "ext") {
            if (!externals.count(ref.key)) {
              throw std::invalid_argument(where + ": undeclared external '" + ref.key + "'");
            }
          } else if (ref.scope == "self") {
            if (!stage.outputs.count(ref.key)) {
              throw std::invalid_argument(where + ": no output named '" + ref.key + "'");
            }
          } else {
            const auto it = earlier.find(ref.scope);
            if (it == earlier.end()) {
              throw std::invalid_argument(where + ": input from '" + ref.scope +
                                          "' which is not an earlier stage");
            }
            if (!it->second->outputs.count(ref.key)) {
              throw std::invalid_argument(where + ": stage '" + ref.scope + "' declares no output '" + ref.key + "'");
            }
          }
        }
      }
    }
    earlier[stage.name] = &stage;
  }
}

int run_recipe(const Recipe& recipe, const RecipeRunOptions& options, std::ostream& out, std::ostream& err) {
  try {
    recipe.validate();
  } catch (const std::invalid_argument& e) {
    err << "xlt recipe: " << e.what() << "\n";
    return kExitData;
  }
  const std::uint64_t base_seed = options.seed.value_or(recipe.seed);
  const auto root = options.runs_dir / recipe.name;
  std::filesystem::create_directories(root);
  std::ofstream log(root / "recipe.log", std::ios::app);

  auto stage_dir = [&](const std::string& stage) { return root / stage; };
  auto resolve = [&](const RecipeStage& stage, const std::string& value) {
    std::string result;
    std::size_t last = 0;
    for (std::sregex_iterator it(value.begin(), value.end(), reference_pattern()), end; it != end; ++it) {
      result += value.substr(last, static_cast<std::size_t>(it->position()) - last);
      const std::string scope = (*it)[1].str();
      const std::string key = (*it)[2].str();
      if (scope == "ext") {
        result += recipe.externals.at(key).string();
      } else if (scope == "self") {
        result += (stage_dir(stage.name) / stage.outputs.at(key)).string();
      } else {
        const auto& producer = *std::find_if(recipe.stages.begin(), recipe.stages.end(),
                                             [&](const RecipeStage& s) { return s.name == scope; });
        result += (stage_dir(scope) / producer.outputs.at(key)).string();
      }
      last = static_cast<std::size_t>(it->position() + it->length());
    }
    return result + value.substr(last);
  };

  json top;
  top["recipe"] = recipe.name;
  top["seed"] = base_seed;
  top["stages"] = json::array();

  for (std::size_t index = 0; index < recipe.stages.size(); ++index) {
    const auto& stage = recipe.stages[index];
    const auto dir = stage_dir(stage.name);
    std::filesystem::create_directories(dir);

    // Everything that determines the stage's outputs, in location-free form.
    json key;
    key["stage"] = stage.name;
    key["command"] = stage.command;
    json args = json::object();
    for (const auto& [flag, values] : stage.args) args[flag] = values;
    key["args"] = args;
    const std::uint64_t seed = derive_seed(base_seed, static_cast<std::uint64_t>(index));
    if (takes_seed(stage.command) && !stage.args.count("seed")) key["seed"] = seed;
    json inputs = json::object();
    for (const auto& [flag, values] : stage.args) {
      for (const auto& v : values) {
        for (const auto& ref : references_in(v)) {
          if (ref.scope == "self") continue;
          const auto path = resolve(stage, "${" + ref.scope + "." + ref.key + "}");
          inputs[ref.scope + "." + ref.key] = sha256_file(path);
        }
      }
    }
    key["inputs"] = inputs;

    const auto manifest_path = dir / "manifest.json";
    bool done = false;
    if (std::filesystem::exists(manifest_path)) {
      try {
        const auto previous = json::parse(read_file(manifest_path));
        if (previous.at("key") == key) {
          done = true;
          for (const auto& [name, entry] : previous.at("outputs").items()) {
            const auto file = dir / entry.at("file").get<std::string>();
            if (!std::filesystem::exists(file) || sha256_file(file) != entry.at("sha256").get<std::string>()) {
              done = false;
            }
          }
        }
      } catch (const std::exception&) {
        done = false;
      }
    }

    json manifest;
    if (done) {
      manifest = json::parse(read_file(manifest_path));
      out << "[" << stage.name << "] skipped (outputs up to date)\n";
      log << stage.name << " skipped\n";
    } else {
      std::filesystem::remove(manifest_path);
      std::vector<std::string> argv{stage.command};
      for (const auto& [flag, values] : stage.args) {
        if (flag == kPositional) {
          for (const auto& v : values) argv.push_back(resolve(stage, v));
          continue;
        }
        for (const auto& v : values) {
          if (v == "false") continue;
          argv.push_back("--" + flag);
          if (v != "true") argv.push_back(resolve(stage, v));
        }
      }
      if (key.contains("seed")) {
        argv.push_back("--seed");
        argv.push_back(std::to_string(seed));
      }
      out << "[" << stage.name << "] xlt";
      for (const auto& a : argv) out << ' ' << a;
      out << "\n";
      std::ostringstream stage_out;
      const int code = run(argv, stage_out, err);
      write_file(dir / "stdout.txt", stage_out.str());
      out << stage_out.str();
      if (code != kExitOk) {
        err << "xlt recipe: stage '" << stage.name << "' failed with exit code " << code << "\n";
        log << stage.name << " failed (" << code << ")\n";
        return code;
      }
      manifest["key"] = key;
      json outputs = json::object();
      for (const auto& [name, file] : stage.outputs) {
        const auto path = dir / file;
        if (!std::filesystem::exists(path)) {
          err << "xlt recipe: stage '" << stage.name << "' did not produce " << file << "\n";
          return kExitData;
        }
        outputs[name] = {{"file", file}, {"sha256", sha256_file(path)}};
      }
      manifest["outputs"] = outputs;
      write_file(manifest_path, manifest.dump(2) + "\n");
      log << stage.name << " ran\n";
    }
    top["stages"].push_back({{"name", stage.name},
                             {"command", stage.command},
                             {"manifest_sha256", sha256_file(manifest_path)},
                             {"outputs", manifest["outputs"]}});
    write_file(root / "manifest.json", top.dump(2) + "\n");
  }
  out << "recipe " << recipe.name << " complete: " << (root / "manifest.json").string() << "\n";
  return kExitOk;
}

}  // namespace xlt::cli
