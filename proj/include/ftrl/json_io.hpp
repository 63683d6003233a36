#ifndef FTRL_JSON_IO_HPP
#define FTRL_JSON_IO_HPP

#include <json.hpp>

#include "ftrl/backbone.hpp"

namespace ftrl {

// ADL hooks for nlohmann; definitions live next to the types' modules.
void to_json(nlohmann::json& j, const BackboneConfig& c);
void from_json(const nlohmann::json& j, BackboneConfig& c);

}  // namespace ftrl

#endif  // FTRL_JSON_IO_HPP
