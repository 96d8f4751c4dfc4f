#pragma once

// The musculo command line. run() is the whole program minus process
// plumbing so tests can drive it with in-memory streams.
//
// Exit codes: 0 success, 1 usage error, 2 data/model error.

#include <openssl/evp.h>

#include <CLI11.hpp>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <json.hpp>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "musculo/musculo.hpp"

namespace musculo::cli {

namespace fs = std::filesystem;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline std::string sha256_hex(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("sha256 failed");
  }
  static const char* digits = "0123456789abcdef";
  std::string out;
  for (unsigned i = 0; i < len; ++i) {
    out += digits[md[i] >> 4];
    out += digits[md[i] & 15];
  }
  return out;
}

inline std::string file_hash(const std::string& path) { return "sha256:" + sha256_hex(read_text(path)); }

inline std::string fmt(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

// Where a command may write. Everything lands under `root`; the primary
// output, when there is one, is a file inside it.
class Outputs {
 public:
  // `out` is the --out flag: a path ending in .csv names the primary file,
  // anything else a directory. `file_flag` is an extra file option (e.g.
  // --dump) which, without --out, fixes the root at its own directory.
  void configure(const std::string& out, const std::string& default_name, const std::string& file_flag = {}) {
    if (!out.empty()) {
      const fs::path p(out);
      if (p.extension() == ".csv") {
        root_ = p.has_parent_path() ? p.parent_path() : fs::path(".");
        primary_ = p;
      } else {
        root_ = p;
        if (!default_name.empty()) primary_ = root_ / default_name;
      }
      base_ = root_;
    } else if (!file_flag.empty()) {
      const fs::path p(file_flag);
      root_ = p.has_parent_path() ? p.parent_path() : fs::path(".");
    } else {
      root_ = ".";
    }
    fs::create_directories(root_);
    if (primary_) primary_ = inside(*primary_);
  }

  // Resolves `name` against the root and refuses anything that leaves it.
  fs::path inside(const fs::path& name) const {
    const fs::path base = fs::weakly_canonical(fs::absolute(root_));
    const fs::path target = fs::weakly_canonical(name.is_absolute() ? name : fs::absolute(name));
    const fs::path rel = target.lexically_relative(base);
    if (rel.empty() || *rel.begin() == "..") {
      throw UsageError("output '" + name.string() + "' is outside the output directory '" + root_.string() + "'");
    }
    return target;
  }

  // Relative names are taken against --out when given, else the working
  // directory.
  fs::path resolve(const std::string& name) const {
    const fs::path p(name);
    return inside(p.is_absolute() ? p : base_ / p);
  }

  const fs::path& root() const { return root_; }
  bool has_primary() const { return primary_.has_value(); }
  const fs::path& primary() const {
    if (!primary_) throw UsageError("this command needs --out");
    return *primary_;
  }
  void wrote(const fs::path& p) { written_.push_back(p.string()); }
  const std::vector<std::string>& written() const { return written_; }

 private:
  fs::path root_ = ".";
  fs::path base_ = ".";
  std::optional<fs::path> primary_;
  std::vector<std::string> written_;
};

struct Options {
  int threads = 0;
  std::string out;
  std::optional<std::uint64_t> seed;

  std::string model, mesh, clip, traj, emg, foot, dump, task = "run_forward", policy = "constant", imputer = "spline";
  std::vector<std::string> clips;
  double density = 1000.0, excitation = 0.0, amplitude = 0.05, duration = 10.0, tolerance = 0.01;
  double min_duration = 1.0, mask_prob = 0.1, lr = 0.05, reg = 1e-2, init_noise = 0.0, scale = 1.0, level = 0.0;
  double ref_stance = -1.0;
  int steps = -1, min_markers = 10, segment = 100, iterations = 500, period = 0, crossfade = 0, repeats = 3;
  int grid = 200, min_phase = 3;
  long samples = 10000;
  std::vector<double> length_range, operating_range;
};

class Program {
 public:
  Program(std::vector<std::string> args, std::ostream& out, std::ostream& err)
      : args_(std::move(args)), out_(out), err_(err) {}

  int run() {
    const auto t0 = std::chrono::steady_clock::now();
    started_ = std::time(nullptr);
    CLI::App app{"musculo: musculotendon simulation and motion analysis", "musculo"};
    app.require_subcommand(1);
    app.fallthrough();
    app.set_version_flag("--version", kVersion);
    app.add_option("--threads", o_.threads, "worker threads (fallback: MUSCULO_THREADS)")->check(CLI::PositiveNumber);
    build(app);
    std::vector<std::string> rev(args_.rbegin(), args_.rend());
    try {
      app.parse(rev);
      if (!action_) throw UsageError("no command given");
      action_();
    } catch (const CLI::CallForHelp&) {
      out_ << app.help();
      return 0;
    } catch (const CLI::CallForAllHelp&) {
      out_ << app.help("", CLI::AppFormatMode::All);
      return 0;
    } catch (const CLI::CallForVersion&) {
      out_ << kVersion << '\n';
      return 0;
    } catch (const CLI::ParseError& e) {
      err_ << "usage error: " << e.what() << '\n';
      if (command_name_.empty() && (dynamic_cast<const CLI::ExtrasError*>(&e) ||
                                    std::string(e.what()).find("ubcommand") != std::string::npos)) {
        err_ << app.help();
      } else {
        err_ << "run 'musculo --help' for the list of commands\n";
      }
      return 1;
    } catch (const UsageError& e) {
      err_ << "usage error: " << e.what() << '\n';
      return 1;
    } catch (const ModelError& e) {
      err_ << "model error: " << e.what() << '\n';
      return 2;
    } catch (const DivergenceError& e) {
      err_ << "divergence: " << e.what() << '\n';
      return 2;
    } catch (const Error& e) {
      err_ << "error: " << e.what() << '\n';
      return 2;
    } catch (const std::exception& e) {
      err_ << "error: " << e.what() << '\n';
      return 2;
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    try {
      write_manifest(seconds);
    } catch (const std::exception& e) {
      err_ << "error: cannot write run manifest: " << e.what() << '\n';
      return 2;
    }
    return 0;
  }

 private:
  std::vector<std::string> args_;
  std::ostream& out_;
  std::ostream& err_;
  Options o_;
  Outputs outputs_;
  std::function<void()> action_;
  std::string command_name_;
  std::string model_hash_;
  std::map<std::string, std::string> input_hashes_;
  std::time_t started_ = 0;

  // ------------------------------------------------------------ wiring

  CLI::App* command(CLI::App* group, const std::string& name, const std::string& help, void (Program::*fn)()) {
    CLI::App* c = group->add_subcommand(name, help);
    const std::string full = group->get_name() + "-" + name;
    c->callback([this, fn, full] {
      command_name_ = full;
      action_ = [this, fn] { (this->*fn)(); };
    });
    return c;
  }

  static CLI::Option* add_out(CLI::App* c, Options& o, const std::string& help) {
    return c->add_option("--out", o.out, help);
  }
  static void add_seed(CLI::App* c, Options& o) {
    c->add_option_function<std::uint64_t>("--seed", [&o](const std::uint64_t& s) { o.seed = s; }, "random seed");
  }

  void build(CLI::App& app) {
    CLI::App* model = app.add_subcommand("model", "model files")->require_subcommand(1);
    {
      auto* c = command(model, "validate", "load a model and report its contents", &Program::model_validate);
      c->add_option("model", o_.model, "model file")->required();
      add_out(c, o_, "directory for the run manifest");
      auto* i = command(model, "inertia", "mass properties of a closed triangle mesh", &Program::model_inertia);
      i->add_option("mesh", o_.mesh, "mesh file")->required();
      i->add_option("--density", o_.density, "kg/m^3")->check(CLI::PositiveNumber);
      add_out(i, o_, "directory for the run manifest");
    }
    CLI::App* sim = app.add_subcommand("sim", "forward dynamics")->require_subcommand(1);
    {
      auto* c = command(sim, "step", "simulate under constant excitation", &Program::sim_step);
      c->add_option("--model", o_.model)->required();
      c->add_option("--steps", o_.steps, "control steps")->check(CLI::NonNegativeNumber);
      c->add_option("--excitation", o_.excitation, "excitation applied to every muscle");
      c->add_option("--dump", o_.dump, "state CSV, one row per control step");
      add_seed(c, o_);
      add_out(c, o_, "output directory or state CSV");
      auto* p = command(sim, "pendulum-check", "compare the oscillation period with the linearized one",
                        &Program::sim_pendulum);
      p->add_option("--model", o_.model)->required();
      p->add_option("--amplitude", o_.amplitude, "rad");
      p->add_option("--duration", o_.duration, "s")->check(CLI::PositiveNumber);
      p->add_option("--tolerance", o_.tolerance, "relative period error allowed");
      add_out(p, o_, "directory for the run manifest");
    }
    CLI::App* mocap = app.add_subcommand("mocap", "marker clips")->require_subcommand(1);
    {
      auto* s = command(mocap, "select", "longest valid interval of a clip", &Program::mocap_select);
      s->add_option("--clip", o_.clip)->required();
      s->add_option("--min-markers", o_.min_markers);
      s->add_option("--min-duration", o_.min_duration, "s");
      add_out(s, o_, "directory or CSV for the selected section");
      auto* i = command(mocap, "impute", "fill missing marker samples", &Program::mocap_impute);
      i->add_option("--clip", o_.clip)->required();
      i->add_option("--imputer", o_.imputer)->check(CLI::IsMember({"spline", "hold"}));
      add_out(i, o_, "directory or CSV for the filled clip")->required();
      auto* e = command(mocap, "evaluate", "score an imputer under random masking", &Program::mocap_evaluate);
      e->add_option("--clip", o_.clip)->required();
      e->add_option("--imputer", o_.imputer)->check(CLI::IsMember({"spline", "hold"}));
      e->add_option("--mask-prob", o_.mask_prob)->check(CLI::Range(0.0, 1.0));
      e->add_option("--segment", o_.segment, "frames per segment");
      add_seed(e, o_);
      add_out(e, o_, "directory for the run manifest");
      auto* k = command(mocap, "ik", "fit joint trajectories and marker attachments", &Program::mocap_ik);
      k->add_option("--clip", o_.clips, "marker clip CSV (repeatable)")->required();
      k->add_option("--model", o_.model)->required();
      k->add_option("--iterations", o_.iterations);
      k->add_option("--lr", o_.lr, "learning rate");
      k->add_option("--reg", o_.reg, "neck-shape regularizer weight");
      k->add_option("--init-noise", o_.init_noise, "rad");
      k->add_option("--scale", o_.scale, "marker rescaling factor")->check(CLI::PositiveNumber);
      add_seed(k, o_);
      add_out(k, o_, "output directory")->required();
      auto* y = command(mocap, "cyclic", "loop the middle of a joint trajectory", &Program::mocap_cyclic);
      y->add_option("--traj", o_.traj)->required();
      y->add_option("--model", o_.model)->required();
      y->add_option("--period", o_.period, "frames")->required();
      y->add_option("--crossfade", o_.crossfade, "frames");
      y->add_option("--repeats", o_.repeats);
      add_out(y, o_, "directory or CSV for the cyclic trajectory")->required();
    }
    CLI::App* env = app.add_subcommand("env", "task environments")->require_subcommand(1);
    {
      auto* r = command(env, "run", "roll out a fixed policy", &Program::env_run);
      r->add_option("--task", o_.task)->check(CLI::IsMember({"run_forward", "tracking", "neck"}));
      r->add_option("--model", o_.model)->required();
      r->add_option("--clip", o_.clip, "reference joint trajectory CSV (tracking)");
      r->add_option("--policy", o_.policy, "random | constant | replay:<csv>");
      r->add_option("--level", o_.level, "action of the constant policy, in [-1, 1]")->check(CLI::Range(-1.0, 1.0));
      r->add_option("--steps", o_.steps, "control steps")->check(CLI::NonNegativeNumber);
      r->add_option("--dump", o_.dump, "state CSV, one row per control step");
      add_seed(r, o_);
      add_out(r, o_, "output directory or state CSV");
    }
    CLI::App* gait = app.add_subcommand("gait", "gait cycles")->require_subcommand(1);
    {
      auto* a = command(gait, "analyze", "phase-normalized excitation profiles", &Program::gait_analyze);
      a->add_option("--traj", o_.traj, "state CSV with u_<muscle> and contact_<site> columns")->required();
      a->add_option("--foot", o_.foot, "contact site")->required();
      a->add_option("--emg", o_.emg, "reference CSV: phase,<muscle>...");
      a->add_option("--ref-stance", o_.ref_stance, "stance fraction of the reference (default: the simulated one)");
      a->add_option("--grid", o_.grid)->check(CLI::Range(2, 100000));
      a->add_option("--min-phase", o_.min_phase, "debounce window, frames");
      add_out(a, o_, "directory or CSV for the profiles")->required();
    }
    CLI::App* muscle = app.add_subcommand("muscle", "muscle parameters")->require_subcommand(1);
    {
      auto* s = command(muscle, "solve-lengths", "rest and tendon lengths from length and operating ranges",
                        &Program::muscle_solve);
      s->add_option("--lr", o_.length_range, "min,max path length")->delimiter(',')->expected(2)->required();
      s->add_option("--r", o_.operating_range, "min,max normalized length")->delimiter(',')->expected(2)->required();
      add_out(s, o_, "directory for the run manifest");
      auto* c = command(muscle, "calibrate", "sample joint ranges for muscle length ranges", &Program::muscle_calibrate);
      c->add_option("--model", o_.model)->required();
      c->add_option("--samples", o_.samples)->check(CLI::PositiveNumber);
      add_seed(c, o_);
      add_out(c, o_, "directory or CSV for the table")->required();
    }
  }

  // ------------------------------------------------------------ helpers

  Model load(const std::string& path) {
    model_hash_ = file_hash(path);
    LoadOptions lo;
    lo.warn = [this](const std::string& w) { err_ << "warning: " << w << '\n'; };
    return load_model_file(path, lo);
  }
  void input(const std::string& path) { input_hashes_[path] = file_hash(path); }
  std::uint64_t seed() const { return o_.seed.value_or(0); }

  void save(const fs::path& p, const std::string& text) {
    write_text(p.string(), text);
    outputs_.wrote(p);
  }

  void write_manifest(double seconds) {
    nlohmann::ordered_json j;
    j["tool"] = "musculo";
    j["version"] = kVersion;
    j["command"] = command_name_;
    j["command_line"] = args_;
    j["seed"] = o_.seed ? nlohmann::ordered_json(*o_.seed) : nlohmann::ordered_json(nullptr);
    j["threads"] = resolve_threads(o_.threads);
    j["model_hash"] = model_hash_.empty() ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(model_hash_);
    j["input_hashes"] = input_hashes_;
    j["outputs"] = outputs_.written();
    char stamp[32];
    std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&started_));
    j["started_at"] = stamp;
    j["duration_s"] = seconds;
    fs::path where = outputs_.root() / ("musculo-" + command_name_ + ".manifest.json");
    if (outputs_.has_primary()) where = outputs_.primary().string() + ".manifest.json";
    else if (!outputs_.written().empty()) where = outputs_.written().front() + ".manifest.json";
    write_text(where.string(), j.dump(2) + "\n");
  }

  // ------------------------------------------------------------ model

  void model_validate() {
    outputs_.configure(o_.out, "");
    const Model m = load(o_.model);
    out_ << "ok: " << m.bodies.size() << " bodies, " << m.joint_count() << " joints, " << m.muscle_count()
         << " muscles, " << m.sites.size() << " sites, " << m.markers.size() << " markers, total mass "
         << fmt(m.total_mass()) << " kg\n";
  }

  void model_inertia() {
    outputs_.configure(o_.out, "");
    input(o_.mesh);
    const TriangleMesh mesh = parse_mesh(read_text(o_.mesh));
    const MassProperties mp = mesh_inertia(mesh, o_.density);
    out_ << "volume=" << fmt(mp.volume, 12) << " mass=" << fmt(mp.mass, 12) << " com=" << fmt(mp.com.x(), 12) << ','
         << fmt(mp.com.y(), 12) << ',' << fmt(mp.com.z(), 12) << '\n';
    for (int r = 0; r < 3; ++r) {
      out_ << "inertia[" << r << "]=" << fmt(mp.inertia(r, 0), 12) << ',' << fmt(mp.inertia(r, 1), 12) << ','
           << fmt(mp.inertia(r, 2), 12) << '\n';
    }
  }

  // ------------------------------------------------------------ sim

  void sim_step() {
    outputs_.configure(o_.out, o_.dump.empty() ? "sim.csv" : "", o_.dump);
    const Model m = load(o_.model);
    const SimConfig cfg;
    const int steps = o_.steps < 0 ? 40 : o_.steps;
    SimState s = initial_state(m);
    const VecX u = VecX::Constant(m.muscle_count(), o_.excitation);
    StateRecorder rec(m);
    for (int k = 0; k < steps; ++k) {
      s = step(m, s, u, cfg);
      rec.record(s);
    }
    out_ << "steps=" << steps << " time=" << fmt(s.time) << " energy=" << fmt(mechanical_energy(m, s.q, s.qd, cfg))
         << '\n';
    std::optional<fs::path> target;
    if (!o_.dump.empty()) target = outputs_.resolve(o_.dump);
    else if (outputs_.has_primary()) target = outputs_.primary();
    if (target) save(*target, format_table(rec.table()));
  }

  void sim_pendulum() {
    outputs_.configure(o_.out, "");
    const Model m = load(o_.model);
    const SimConfig cfg;
    const double measured = measure_period(m, o_.amplitude, o_.duration, cfg);
    const double expected = linearized_period(m, cfg);
    const double rel = std::abs(measured - expected) / expected;
    out_ << "period=" << fmt(measured, 9) << " s linearized=" << fmt(expected, 9) << " s relative_error=" << fmt(rel, 3)
         << (rel <= o_.tolerance ? " pass" : " fail") << '\n';
    if (!(rel <= o_.tolerance)) throw DataError("period differs from the linearized one by more than the tolerance");
  }

  // ------------------------------------------------------------ mocap

  Clip read_input_clip(const std::string& path) {
    input(path);
    return read_clip(path);
  }

  Imputer imputer() const { return o_.imputer == "hold" ? Imputer(hold_impute) : Imputer(spline_impute); }

  void mocap_select() {
    outputs_.configure(o_.out, "selected.csv");
    const Clip c = read_input_clip(o_.clip);
    const auto iv = select_interval(c, o_.min_markers, o_.min_duration);
    if (!iv) {
      out_ << "none\n";
      return;
    }
    out_ << "start=" << iv->start << " end=" << iv->end << " frames=" << iv->end - iv->start << '\n';
    if (!o_.out.empty()) save(outputs_.primary(), format_table(clip_table(slice(c, *iv))));
  }

  void mocap_impute() {
    outputs_.configure(o_.out, "imputed.csv");
    const Clip c = read_input_clip(o_.clip);
    long missing = static_cast<long>(c.mask.size() - c.mask.count());
    save(outputs_.primary(), format_table(clip_table(impute(c, imputer()))));
    out_ << "filled=" << missing << '\n';
  }

  void mocap_evaluate() {
    outputs_.configure(o_.out, "");
    const Clip c = read_input_clip(o_.clip);
    const ImputerScore s = evaluate_imputer(c, imputer(), o_.mask_prob, o_.segment, seed());
    out_ << "imputer=" << o_.imputer << " mean_error=" << fmt(s.mean_error, 9) << " masked=" << s.masked << '\n';
  }

  void mocap_ik() {
    outputs_.configure(o_.out, "");
    const Model m = load(o_.model);
    std::vector<Clip> clips;
    for (const auto& p : o_.clips) {
      Clip c = rescale(read_input_clip(p), o_.scale);
      if (c.mask.count() != c.mask.size()) c = impute(c);
      clips.push_back(std::move(c));
    }
    IkOptions opt;
    opt.iterations = o_.iterations;
    opt.learning_rate = o_.lr;
    opt.regularizer_weight = o_.reg;
    opt.seed = seed();
    opt.init_noise = o_.init_noise;
    opt.threads = resolve_threads(o_.threads);
    const IkResult r = ik_fit(clips, m, opt);
    for (std::size_t k = 0; k < r.trajectories.size(); ++k) {
      save(outputs_.resolve("ik_" + std::to_string(k) + ".csv"), format_table(trajectory_table(r.trajectories[k])));
    }
    std::string att = "marker,body,x,y,z\n";
    for (const auto& a : r.attachments) {
      att += a.name + "," + m.bodies[a.body].name + "," + format_number(a.offset.x()) + "," +
             format_number(a.offset.y()) + "," + format_number(a.offset.z()) + "\n";
    }
    save(outputs_.resolve("attachments.csv"), att);
    out_ << "loss=" << fmt(r.loss, 9) << " m iterations=" << r.iterations << " range_violations=" << r.range_violations
         << '\n';
  }

  void mocap_cyclic() {
    outputs_.configure(o_.out, "cyclic.csv");
    const Model m = load(o_.model);
    input(o_.traj);
    const Trajectory t = read_trajectory(o_.traj, m);
    save(outputs_.primary(), format_table(trajectory_table(make_cyclic(t, o_.period, o_.crossfade, o_.repeats))));
    out_ << "frames=" << o_.period * o_.repeats << '\n';
  }

  // ------------------------------------------------------------ env

  void env_run() {
    const TaskKind task = parse_task(o_.task);
    if (task == TaskKind::tracking && o_.clip.empty()) {
      throw UsageError("--clip is required for --task tracking (reference joint trajectory CSV)");
    }
    outputs_.configure(o_.out, o_.dump.empty() ? "episode.csv" : "", o_.dump);
    const Model m = load(o_.model);
    std::optional<Trajectory> ref;
    if (task == TaskKind::tracking) {
      input(o_.clip);
      ref = read_trajectory(o_.clip, m);
    }
    const int steps = o_.steps < 0 ? 1000 : o_.steps;
    const int nm = m.muscle_count();

    std::function<VecX(int)> policy;
    Rng policy_rng = Rng(seed()).split("policy");
    if (o_.policy == "constant") {
      policy = [&](int) { return VecX::Constant(nm, o_.level).eval(); };
    } else if (o_.policy == "random") {
      policy = [&](int) {
        VecX a(nm);
        for (int i = 0; i < nm; ++i) a[i] = policy_rng.uniform(-1.0, 1.0);
        return a;
      };
    } else if (o_.policy.rfind("replay:", 0) == 0) {
      const std::string file = o_.policy.substr(7);
      input(file);
      const Table t = read_table(file);
      MatX actions(t.rows.rows(), nm);
      for (int i = 0; i < nm; ++i) {
        const int c = t.require("u_" + m.muscles[i].params.name, file);
        actions.col(i) = 2.0 * t.rows.col(c).array() - 1.0;
      }
      if (actions.rows() < steps) {
        throw DataError(file + ": replay has " + std::to_string(actions.rows()) + " rows, need " + std::to_string(steps));
      }
      policy = [actions](int k) { return VecX(actions.row(k).transpose()); };
    } else {
      throw UsageError("--policy must be random, constant or replay:<file>");
    }

    Environment env(m, task, TaskConfig{}, seed(), ref);
    env.reset();
    StateRecorder rec(m);
    std::vector<double> rewards, episodes;
    double reward_sum = 0.0;
    long finished = 0, finished_steps = 0;
    for (int k = 0; k < steps; ++k) {
      const StepResult r = env.step(policy(k));
      rec.record(env.state());
      rewards.push_back(r.status.reward);
      episodes.push_back(env.episode());
      reward_sum += r.status.reward;
      if (r.status.terminated || r.truncated) {
        ++finished;
        finished_steps += env.episode_step();
        env.reset();
      }
    }
    Table t = rec.table();
    t.header.push_back("reward");
    t.header.push_back("episode");
    t.rows.conservativeResize(Eigen::NoChange, t.rows.cols() + 2);
    for (int k = 0; k < steps; ++k) {
      t.rows(k, t.rows.cols() - 2) = rewards[k];
      t.rows(k, t.rows.cols() - 1) = episodes[k];
    }
    const fs::path target = o_.dump.empty() ? outputs_.primary() : outputs_.resolve(o_.dump);
    save(target, format_table(t));
    const double mean_len = finished > 0 ? static_cast<double>(finished_steps) / finished : env.episode_step();
    out_ << "task=" << o_.task << " steps=" << steps << " episodes=" << finished
         << " mean_reward=" << fmt(steps > 0 ? reward_sum / steps : 0.0) << " mean_episode_length=" << fmt(mean_len)
         << '\n';
  }

  // ------------------------------------------------------------ gait

  void gait_analyze() {
    outputs_.configure(o_.out, "gait_profile.csv");
    input(o_.traj);
    const Table t = read_table(o_.traj);
    const int cc = t.require("contact_" + o_.foot, o_.traj);
    std::vector<bool> contact;
    for (Eigen::Index i = 0; i < t.rows.rows(); ++i) contact.push_back(t.rows(i, cc) > 0.5);
    std::vector<std::string> names;
    std::vector<std::vector<double>> traces;
    for (std::size_t j = 0; j < t.header.size(); ++j) {
      if (t.header[j].rfind("u_", 0) != 0) continue;
      names.push_back(t.header[j].substr(2));
      std::vector<double> v(t.rows.rows());
      for (Eigen::Index i = 0; i < t.rows.rows(); ++i) v[i] = t.rows(i, j);
      traces.push_back(std::move(v));
    }
    if (names.empty()) throw DataError(o_.traj + ": no u_<muscle> columns");
    const auto strides = segment_gait(contact, o_.min_phase);
    const GaitProfile sim = build_profile(names, traces, strides, o_.grid);

    std::optional<GaitProfile> ref;
    if (!o_.emg.empty()) {
      input(o_.emg);
      const ReferenceProfile rp = reference_from_table(read_table(o_.emg), o_.emg);
      GaitProfile p;
      p.grid = sim.grid;
      p.stance_points = sim.stance_points;
      p.stance_fraction = o_.ref_stance > 0.0 ? o_.ref_stance : sim.stance_fraction;
      for (std::size_t i = 0; i < rp.muscles.size(); ++i) {
        p.muscles.push_back(rp.muscles[i]);
        p.traces.push_back(resample_reference(rp.phase, rp.values[i], p.stance_fraction, p.grid, p.stance_points));
      }
      ref = std::move(p);
    }

    Table prof;
    prof.header = {"index", "phase"};
    for (const auto& n : sim.muscles) prof.header.push_back("sim_" + n);
    if (ref) {
      for (const auto& n : ref->muscles) prof.header.push_back("ref_" + n);
    }
    prof.rows.resize(sim.grid, static_cast<Eigen::Index>(prof.header.size()));
    for (int i = 0; i < sim.grid; ++i) {
      Eigen::Index c = 0;
      prof.rows(i, c++) = i;
      prof.rows(i, c++) = 100.0 * i / sim.grid;
      for (const auto& tr : sim.traces) prof.rows(i, c++) = tr[i];
      if (ref) {
        for (const auto& tr : ref->traces) prof.rows(i, c++) = tr[i];
      }
    }
    save(outputs_.primary(), format_table(prof));
    out_ << "strides=" << strides.size() << " stance_fraction=" << fmt(sim.stance_fraction)
         << " stance_points=" << sim.stance_points << '\n';
    if (!ref) return;
    const auto report = compare_profiles(sim, *ref);
    std::string csv = "muscle,timing_difference,correlation,excess,excess_fraction\n";
    for (const auto& r : report) {
      csv += r.muscle + "," + format_number(r.timing_difference) + "," + format_number(r.correlation) + "," +
             (r.excess ? "1" : "0") + "," + format_number(r.excess_fraction) + "\n";
      out_ << r.muscle << ": timing_difference=" << fmt(r.timing_difference) << "% correlation=" << fmt(r.correlation)
           << (r.excess ? " excess" : "") << '\n';
    }
    fs::path rp = outputs_.primary();
    rp.replace_filename(rp.stem().string() + "_report.csv");
    save(outputs_.inside(rp), csv);
  }

  // ------------------------------------------------------------ muscle

  void muscle_solve() {
    outputs_.configure(o_.out, "");
    const RestLengths r = solve_rest_lengths({o_.length_range[0], o_.length_range[1]},
                                             {o_.operating_range[0], o_.operating_range[1]});
    out_ << "L0=" << fmt(r.rest_length, 15) << " LT=" << fmt(r.tendon_length, 15) << '\n';
  }

  void muscle_calibrate() {
    outputs_.configure(o_.out, "calibration.csv");
    const Model m = load(o_.model);
    std::string csv = "muscle,length_min,length_max,rest_length,tendon_length\n";
    for (const auto& mu : m.muscles) {
      const LengthRange lr = calibrate_length_range(m, mu.path, o_.samples, seed());
      std::string l0 = "NaN", lt = "NaN";
      try {
        const RestLengths r = solve_rest_lengths(lr, mu.params.operating_range);
        l0 = format_number(r.rest_length);
        lt = format_number(r.tendon_length);
      } catch (const DataError& e) {
        err_ << "warning: " << mu.params.name << ": " << e.what() << '\n';
      }
      csv += mu.params.name + "," + format_number(lr.min) + "," + format_number(lr.max) + "," + l0 + "," + lt + "\n";
      out_ << mu.params.name << ": " << fmt(lr.min) << " .. " << fmt(lr.max) << " m\n";
    }
    save(outputs_.primary(), csv);
  }
};

inline int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  return Program(args, out, err).run();
}

}  // namespace musculo::cli
