#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "diffinv/field.hpp"
#include "diffinv/forward.hpp"
#include "diffinv/network.hpp"
#include "diffinv/score.hpp"
#include "diffinv/sde.hpp"
#include "diffinv/surrogate.hpp"

namespace diffinv {

/// Container file: 4-byte magic, u32 version, u64 header length, JSON header,
/// then the declared float64 arrays back to back, little-endian.
struct ContainerArray {
  std::string name;
  std::vector<long> shape;
  std::vector<double> data;
};

struct Container {
  std::string kind;
  nlohmann::json meta;
  std::vector<ContainerArray> arrays;

  const ContainerArray& array(const std::string& name) const;
};

void write_container(const std::string& path, const Container& c);
Container read_container(const std::string& path);

// sample sets
void save_sample_set(const std::string& path, const SampleSet& set, nlohmann::json extra_meta = {});
SampleSet load_sample_set(const std::string& path);

// SDE specs inside JSON headers (the VE-general family is not serializable)
nlohmann::json sde_spec_to_json(const SdeSpec& spec);
SdeSpec sde_spec_from_json(const nlohmann::json& j);

// network checkpoints: layer specs, shapes and seed metadata in the header,
// weight arrays (plus optional Adam moments) in declaration order
void save_checkpoint(const std::string& path, const Network& net, nlohmann::json meta,
                     const AdamState* adam = nullptr);
struct Checkpoint {
  Network net;
  nlohmann::json meta;
  std::optional<AdamState> adam;
};
Checkpoint load_checkpoint(const std::string& path);

// trained score models: checkpoint plus the SdeSpec and normalization
void save_score_model(const std::string& path, const ScoreModel& model, nlohmann::json extra_meta = {},
                      const AdamState* adam = nullptr);
ScoreModel load_score_model(const std::string& path, nlohmann::json* meta_out = nullptr,
                            std::optional<AdamState>* adam_out = nullptr);

// trained surrogates: checkpoint plus grid assembly parameters
void save_surrogate(const std::string& path, const ForwardModel& model, nlohmann::json extra_meta = {});
ForwardModel load_surrogate(const std::string& path, nlohmann::json* meta_out = nullptr);

// supervised training datasets: mu fields then u fields
void save_dataset(const std::string& path, const PairedSet& set, GridShape grid, int state_channels,
                  nlohmann::json extra_meta = {});
PairedSet load_dataset(const std::string& path, GridShape* grid_out = nullptr, nlohmann::json* meta_out = nullptr);

/// FNV-1a hash of a canonical JSON dump, hex-encoded; stamps output files.
std::string config_hash(const nlohmann::json& j);

}  // namespace diffinv
