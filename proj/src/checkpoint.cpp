#include "gaitbridge/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include "gaitbridge/binary_io.hpp"
#include "gaitbridge/error.hpp"

namespace gaitbridge {

namespace {

constexpr std::string_view kMagic = "GAITBCKP";

void write_rng(BinaryWriter& out, const Rng& rng) { out.str(rng.state()); }

Rng read_rng(BinaryReader& in, const char* what) {
  Rng rng(0);
  try {
    rng.set_state(in.str(what));
  } catch (const ParseError&) {
    throw;
  } catch (const std::exception&) {
    throw ParseError(std::string("invalid ") + what);
  }
  return rng;
}

void write_payload(BinaryWriter& out, const RunState& rs) {
  out.str(rs.config_json);
  out.i64(rs.iteration);
  out.i64(rs.next_episode);
  write_rng(out, rs.rng);

  rs.policy.net.write(out);
  out.vec(rs.policy.head.log_std);
  rs.value.net.write(out);
  rs.ppo_optimizer.policy.write(out);
  rs.ppo_optimizer.log_std.write(out);
  rs.ppo_optimizer.value.write(out);

  rs.mappers.r2h.write(out);
  rs.mappers.h2r.write(out);
  out.f64(rs.mappers.sigma);
  rs.mappers.human.write(out);
  rs.mappers.robot.write(out);
  rs.mapper_optimizer.r2h.write(out);
  rs.mapper_optimizer.h2r.write(out);

  rs.obs_stats.write(out);
  rs.human_stats.write(out);
  rs.robot_stats.write(out);

  out.u64(rs.envs.size());
  for (const EnvSlot& slot : rs.envs) {
    slot.state.write(out);
    out.i64(slot.clip);
    out.u64(slot.frame);
    out.i64(slot.episode);
    out.u8(slot.needs_reset ? 1 : 0);
    write_rng(out, slot.rng);
  }
}

RunState read_payload(BinaryReader& in) {
  RunState rs;
  rs.config_json = in.str("config snapshot");
  rs.iteration = in.i64("iteration counter");
  rs.next_episode = in.i64("episode counter");
  rs.rng = read_rng(in, "run rng state");

  rs.policy.net = nn::DenseNet::read(in);
  rs.policy.head.log_std = in.vec("policy log_std");
  rs.value.net = nn::DenseNet::read(in);
  rs.ppo_optimizer.policy = nn::AdamState::read(in);
  rs.ppo_optimizer.log_std = nn::AdamState::read(in);
  rs.ppo_optimizer.value = nn::AdamState::read(in);

  rs.mappers.r2h = nn::DenseNet::read(in);
  rs.mappers.h2r = nn::DenseNet::read(in);
  rs.mappers.sigma = in.f64("mapper sigma");
  rs.mappers.human = Standardizer::read(in);
  rs.mappers.robot = Standardizer::read(in);
  rs.mapper_optimizer.r2h = nn::AdamState::read(in);
  rs.mapper_optimizer.h2r = nn::AdamState::read(in);

  rs.obs_stats = RunningMeanStd::read(in);
  rs.human_stats = RunningMeanStd::read(in);
  rs.robot_stats = RunningMeanStd::read(in);

  const std::uint64_t envs = in.u64("environment count");
  if (envs > (1u << 20)) throw ParseError("implausible environment count " + std::to_string(envs));
  rs.envs.resize(envs);
  for (EnvSlot& slot : rs.envs) {
    slot.state = sim::RobotDynState::read(in);
    slot.clip = static_cast<int>(in.i64("environment clip"));
    slot.frame = in.u64("environment frame");
    slot.episode = in.i64("environment episode");
    slot.needs_reset = in.u8("environment reset flag") != 0;
    slot.rng = read_rng(in, "environment rng state");
  }

  // Cross-field consistency, so a checkpoint that parses is also usable.
  auto require = [](bool ok, const char* what) {
    if (!ok) throw ParseError(std::string("inconsistent checkpoint: ") + what);
  };
  require(rs.policy.net.input_size() == rl::kPolicyInputDim && rs.policy.net.output_size() == sim::kActionDim,
          "policy dimensions");
  require(rs.policy.head.log_std.size() == sim::kActionDim, "policy log_std size");
  require(rs.value.net.input_size() == rl::kPolicyInputDim && rs.value.net.output_size() == 1, "value dimensions");
  require(rs.mappers.r2h.input_size() == sim::kPoseDim && rs.mappers.r2h.output_size() == motion::kHumanPoseDim,
          "r2h mapper dimensions");
  require(rs.mappers.h2r.input_size() == motion::kHumanPoseDim && rs.mappers.h2r.output_size() == sim::kPoseDim,
          "h2r mapper dimensions");
  require(rs.ppo_optimizer.policy.first_moment.size() == rs.policy.net.num_parameters() &&
              rs.ppo_optimizer.log_std.first_moment.size() == sim::kActionDim &&
              rs.ppo_optimizer.value.first_moment.size() == rs.value.net.num_parameters() &&
              rs.mapper_optimizer.r2h.first_moment.size() == rs.mappers.r2h.num_parameters() &&
              rs.mapper_optimizer.h2r.first_moment.size() == rs.mappers.h2r.num_parameters(),
          "optimizer state sizes");
  require(rs.mappers.human.dim() == motion::kHumanPoseDim && rs.mappers.robot.dim() == sim::kPoseDim,
          "mapper standardizer sizes");
  require(rs.obs_stats.mean.size() == rl::kPolicyInputDim && rs.human_stats.mean.size() == motion::kHumanPoseDim &&
              rs.robot_stats.mean.size() == sim::kPoseDim,
          "normalization statistics sizes");
  return rs;
}

}  // namespace

std::string serialize_checkpoint(const RunState& rs) {
  BinaryWriter payload;
  write_payload(payload, rs);
  const std::string& body = payload.bytes();
  BinaryWriter out;
  for (char c : kMagic) out.u8(static_cast<std::uint8_t>(c));
  out.u32(kCheckpointVersion);
  out.u64(body.size());
  std::string bytes = out.take();
  bytes += body;
  BinaryWriter tail;
  tail.u64(fnv1a64(body));
  bytes += tail.bytes();
  return bytes;
}

RunState parse_checkpoint(std::string_view bytes) {
  BinaryReader header(bytes);
  for (char c : kMagic)
    if (header.u8("checkpoint magic") != static_cast<std::uint8_t>(c)) throw ParseError("not a checkpoint file");
  const std::uint32_t version = header.u32("checkpoint version");
  if (version != kCheckpointVersion) throw VersionMismatch(version, kCheckpointVersion);
  const std::uint64_t length = header.u64("payload length");
  const std::size_t start = kMagic.size() + 4 + 8;
  if (bytes.size() < start || bytes.size() - start < 8 || length != bytes.size() - start - 8)
    throw ParseError("checkpoint length does not match its header (truncated or padded file)");
  const std::string_view body = bytes.substr(start, length);
  BinaryReader tail(bytes.substr(start + length));
  if (tail.u64("checksum") != fnv1a64(body)) throw ParseError("checkpoint checksum mismatch (corrupted file)");

  BinaryReader in(body);
  RunState rs = read_payload(in);
  if (!in.at_end()) throw ParseError("trailing bytes after checkpoint payload");
  return rs;
}

void save_checkpoint(const RunState& rs, const std::filesystem::path& path) {
  const std::string bytes = serialize_checkpoint(rs);
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write checkpoint " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("failed writing checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

RunState load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read checkpoint " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_checkpoint(buf.str());
}

}  // namespace gaitbridge
