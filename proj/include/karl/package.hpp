#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>

#include "karl/data_store.hpp"
#include "karl/graph.hpp"
#include "karl/graph_json.hpp"

namespace karl {

std::string sha256_hex(std::string_view data);

/// Module package archive: `KPKG\x01`, a u32 file count, then per file a u32
/// name length, the name, a u64 size and the bytes (little-endian).
/// `manifest.json` is always the first file.
struct PackageContents {
  ModuleManifest manifest;  // package field left empty inside the archive
  std::map<std::string, Bytes> files;
};

Bytes pack(const PackageContents& contents);
/// Throws TransferFailure on a malformed archive.
PackageContents unpack(std::string_view blob);

struct Package {
  ModuleManifest manifest;  // with package.hash / size_bytes filled in
  std::shared_ptr<const Bytes> blob;
};

/// Builds the archive and stamps its hash and size into the manifest.
Package make_package(ModuleManifest manifest, std::map<std::string, Bytes> files = {});

/// The hub's local package manager: manifests by name, blobs by hash.
class PackageCatalog {
 public:
  void add(Package package);
  std::optional<ModuleManifest> manifest(std::string_view name) const;
  std::shared_ptr<const Bytes> blob(std::string_view hash) const;
  ManifestResolver resolver() const;

 private:
  mutable std::mutex mutex_;
  std::map<std::string, ModuleManifest, std::less<>> by_name_;
  std::map<std::string, std::shared_ptr<const Bytes>, std::less<>> by_hash_;
};

}  // namespace karl
