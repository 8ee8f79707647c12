#pragma once

#include <functional>
#include <optional>
#include <string_view>

#include <json.hpp>

#include "karl/graph.hpp"

namespace karl {

using Json = nlohmann::json;

/// Resolves a manifest referenced by name inside a fragment document.
using ManifestResolver =
    std::function<std::optional<ModuleManifest>(std::string_view name)>;

Json to_json(const Port& p);
Json to_json(const ModuleManifest& m);
Json to_json(const ModuleInstance& m);
Json to_json(const Edge& e);

/// `{"devices": {...}, "modules": {...}, "edges": [...]}` with node
/// references rendered as tag strings. Output is key-sorted and stable.
Json to_json(const DataflowGraph& g);

ModuleManifest manifest_from_json(const Json& j);

/// Throws ValidationFailure on a malformed document. Module manifests may be
/// given inline or as a name looked up through `resolver`.
DataflowGraph graph_from_json(const Json& j,
                              const ManifestResolver& resolver = {});

}  // namespace karl
