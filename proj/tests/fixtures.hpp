#pragma once

// Shared Van-der-Pol artifacts. make_fixtures writes them once per ctest run
// (FIXTURES_SETUP); a test binary started by hand synthesizes them itself.

#include <filesystem>
#include <fstream>
#include <string>

#include "onestep/alphacert.hpp"
#include "onestep/synth.hpp"

#ifndef ONESTEP_TEST_DATA_DIR
#define ONESTEP_TEST_DATA_DIR "."
#endif

namespace fixture {

inline onestep::SynthConfig vdp_synth_config() {
  onestep::SynthConfig cfg;
  cfg.grid_axes = {onestep::GridAxis{-1.0, 1.0, 101}, onestep::GridAxis{-1.0, 1.0, 101}};
  cfg.input_levels = {21};
  cfg.horizon = 100;
  cfg.stage_weight = 0.1;
  return cfg;
}

inline onestep::CostWeights vdp_weights() {
  return onestep::CostWeights(onestep::Mat::Identity(2, 2), onestep::Mat::Identity(1, 1),
                              onestep::vdp_terminal_matrix());
}

inline constexpr int kAlphaSamples = 4000;
inline constexpr double kOriginExclusion = 1e-3;

inline std::filesystem::path storage_path() { return std::filesystem::path(ONESTEP_TEST_DATA_DIR) / "vdp.storage"; }
inline std::filesystem::path certificate_path() {
  return std::filesystem::path(ONESTEP_TEST_DATA_DIR) / "vdp.storage.alpha";
}

inline onestep::StorageFunction build_vdp_storage() {
  return onestep::synthesize_storage(onestep::make_vdp(), vdp_synth_config());
}

inline onestep::AlphaCertificate build_vdp_certificate(const onestep::StorageFunction& v) {
  return onestep::estimate_alpha(onestep::make_vdp(), v, vdp_weights(), kAlphaSamples, kOriginExclusion);
}

inline const onestep::StorageFunction& vdp_storage() {
  static const onestep::StorageFunction v = [] {
    if (std::filesystem::exists(storage_path())) return onestep::load_storage(storage_path().string());
    return build_vdp_storage();
  }();
  return v;
}

inline const onestep::AlphaCertificate& vdp_certificate() {
  static const onestep::AlphaCertificate c = [] {
    std::ifstream in(certificate_path());
    if (in) return onestep::AlphaCertificate::read(in);
    return build_vdp_certificate(vdp_storage());
  }();
  return c;
}

}  // namespace fixture
