#pragma once

#include <map>
#include <string>

#include "mapfusion/fusion.hpp"
#include "mapfusion/initializer.hpp"
#include "mapfusion/mapgraph.hpp"

namespace mapfusion::config {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// All tunable parameters, sectioned as `init.*`, `fusion.*`, `matcher.*` and
/// `mapgraph.*`. Defaults are embedded; a config file overrides defaults and
/// command-line flags override the file. Unknown keys and invalid values are
/// rejected at load.
struct ToolkitConfig {
  mapgraph::BuildOptions mapgraph;
  initializer::InitConfig init;
  fusion::FusionConfig fusion;

  /// Apply one `section.key = value` assignment.
  void set(const std::string& key, const std::string& value);

  /// Parse a config file (flat key=value lines, '#' comments).
  void load_file(const std::string& path);

  /// Render every parameter as `key = value` lines (the documented key set).
  std::string dump() const;

  void validate() const;
};

}  // namespace mapfusion::config
