#pragma once

#include <CLI11.hpp>

#include <istream>
#include <string>
#include <vector>

namespace cxnprobe::cli {

inline constexpr const char* kConfigSchema = "cxnprobe-config/1";

// --config reader. The file is a JSON object carrying
//   "schema": "cxnprobe-config/1"
// plus one object per subcommand whose keys are that subcommand's long option
// names, e.g. {"schema": "...", "train": {"task": "form", "sizes": [10, 25]}}.
// Options given on the command line win over the file.
class JsonConfig : public CLI::Config {
 public:
  std::string to_config(const CLI::App* app, bool default_also, bool write_description,
                        std::string prefix) const override;
  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override;
};

}  // namespace cxnprobe::cli
