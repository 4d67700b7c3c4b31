#include "cotflow/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <vector>

#include <json.hpp>

#include "cotflow/errors.hpp"
#include "cotflow/version.hpp"

namespace cotflow {

namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint payload assumes a little-endian host");

}  // namespace

void write_checkpoint(const std::string& path, const ParameterMeasure& mu,
                      Activation act) {
  nlohmann::json header = {
      {"version", kCheckpointVersion}, {"S", mu.S},
      {"m", mu.m},                     {"d", mu.d},
      {"activation", std::string(to_string(act))},
      {"seed", mu.seed},
  };
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write checkpoint: " + path);
  out << header.dump() << "\n";
  out.write(reinterpret_cast<const char*>(mu.theta.data()),
            static_cast<std::streamsize>(mu.theta.size() * sizeof(double)));
  if (!out) throw ConfigError("failed while writing checkpoint: " + path);
}

Checkpoint read_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open checkpoint: " + path);
  std::string line;
  if (!std::getline(in, line))
    throw ConfigError("checkpoint has no header line: " + path);

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("checkpoint header is not valid JSON: " + path + ": " + e.what());
  }
  for (const char* key : {"version", "S", "m", "d", "activation", "seed"})
    if (!header.contains(key))
      throw ConfigError(std::string("checkpoint header misses '") + key + "': " + path);
  if (header["version"].get<int>() != kCheckpointVersion)
    throw ConfigError("unsupported checkpoint version in " + path);

  Checkpoint ck;
  ck.activation = activation_from_string(header["activation"].get<std::string>());
  ck.mu = ParameterMeasure::zeros(header["S"].get<int>(), header["m"].get<int>(),
                                  header["d"].get<int>(),
                                  header["seed"].get<std::uint64_t>());
  const std::streamsize bytes =
      static_cast<std::streamsize>(ck.mu.size() * sizeof(double));
  in.read(reinterpret_cast<char*>(ck.mu.theta.data()), bytes);
  if (in.gcount() != bytes)
    throw ConfigError("checkpoint payload truncated: " + path);
  char extra;
  if (in.read(&extra, 1))
    throw ConfigError("checkpoint payload has trailing bytes: " + path);
  return ck;
}

}  // namespace cotflow
