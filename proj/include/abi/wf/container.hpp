#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "abi/num/tensor.hpp"
#include "abi/sim/named_batch.hpp"

namespace abi::wf {

// One stored array or JSON blob. Offsets are relative to the payload base
// (the first 64-byte boundary after the manifest) and 64-byte aligned.
struct ContainerEntry {
    std::string name;
    std::string dtype;  // "f32", "f64" or "json"
    num::Shape shape;   // empty for json entries
    std::uint64_t offset = 0;
    std::uint64_t bytes = 0;
};

// Single-file array store: "ABIC" magic, u16 format version, u64 manifest
// length, JSON manifest, then raw little-endian payload. Every entry is
// independently readable from its manifest offset.
class ArrayContainer {
public:
    static constexpr std::uint16_t format_version = 1;

    void put_f32(const std::string& name, const num::TensorF& values);
    void put_f64(const std::string& name, const num::TensorD& values);
    void put_json(const std::string& name, const std::string& serialized);

    bool contains(const std::string& name) const;
    std::vector<std::string> names() const;
    const ContainerEntry& entry(const std::string& name) const;
    std::size_t size() const { return entries_.size(); }

    num::TensorF f32(const std::string& name) const;
    num::TensorD f64(const std::string& name) const;
    std::string json_text(const std::string& name) const;

    void save(const std::string& path) const;
    static ArrayContainer load(const std::string& path);

private:
    struct Stored {
        ContainerEntry meta;
        std::vector<std::uint8_t> payload;
    };

    const Stored& stored(const std::string& name) const;
    void put_bytes(ContainerEntry meta, std::vector<std::uint8_t> payload);

    std::vector<Stored> entries_;
};

// Batch round trip. Data entries are stored f32 under "data/<name>"; batch
// size, entry order, meta flags and semantics live in a "batch" JSON entry.
// Reading restores f64 arrays, so adapters see the same dtype as fresh
// simulations.
void put_batch(ArrayContainer& container, const sim::NamedBatch& batch);
sim::NamedBatch get_batch(const ArrayContainer& container);

}  // namespace abi::wf
