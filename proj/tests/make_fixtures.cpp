#include <filesystem>
#include <fstream>
#include <iostream>

#include "fixtures.hpp"

int main() {
  const auto dir = fixture::storage_path().parent_path();
  std::filesystem::create_directories(dir);
  const auto v = fixture::build_vdp_storage();
  // Write to temporaries first so a concurrent reader never sees half a file.
  const auto tmp_v = fixture::storage_path().string() + ".tmp";
  onestep::save_storage(tmp_v, v);
  const auto cert = fixture::build_vdp_certificate(v);
  const auto tmp_c = fixture::certificate_path().string() + ".tmp";
  {
    std::ofstream out(tmp_c);
    cert.write(out);
  }
  std::filesystem::rename(tmp_v, fixture::storage_path());
  std::filesystem::rename(tmp_c, fixture::certificate_path());
  std::cout << "alpha_est " << cert.alpha_est << " valid " << cert.valid << '\n';
  return cert.valid ? 0 : 1;
}
