/*
 * Copyright 2026 The coalition-cdn Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <coalition_cdn/harness.hpp>

#include <coalition_cdn/orchestrator.hpp>
#include <coalition_cdn/snapshot.hpp>

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <exception>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace coalition_cdn::harness {

namespace {

// Scenario text ----------------------------------------------------------------

std::string_view trim(std::string_view s)
{
	while (!s.empty() && (s.front() == ' ' || s.front() == '\t'))
	{
		s.remove_prefix(1);
	}
	while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
	{
		s.remove_suffix(1);
	}
	return s;
}

[[noreturn]] void key_error(std::string_view key, std::string const& what)
{
	throw std::invalid_argument("scenario key '" + std::string(key) + "': " + what);
}

template <typename T>
T number(std::string_view key, std::string_view s)
{
	T value{};
	auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
	if (ec != std::errc{} || ptr != s.data() + s.size())
	{
		key_error(key, "'" + std::string(s) + "' is not a valid number");
	}
	return value;
}

template <typename T>
T positive(std::string_view key, std::string_view s)
{
	T value = number<T>(key, s);
	if (!(value > 0))
	{
		key_error(key, "must be positive");
	}
	return value;
}

std::vector<std::string_view> list(std::string_view key, std::string_view s)
{
	if (s.size() < 2 || s.front() != '[' || s.back() != ']')
	{
		key_error(key, "expected a bracketed list");
	}
	s = trim(s.substr(1, s.size() - 2));
	std::vector<std::string_view> out;
	if (s.empty())
	{
		return out;
	}
	while (true)
	{
		auto comma = s.find(',');
		std::string_view item = trim(s.substr(0, comma));
		if (item.empty())
		{
			key_error(key, "empty list item");
		}
		out.push_back(item);
		if (comma == std::string_view::npos)
		{
			break;
		}
		s.remove_prefix(comma + 1);
	}
	return out;
}

std::string shortest(double v)
{
	char buf[64];
	auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
	return std::string(buf, ptr);
}

std::string fixed(double v, int precision = 3)
{
	if (v == 0)
	{
		v = 0; // no "-0.000"
	}
	char buf[64];
	auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::fixed, precision);
	return std::string(buf, ptr);
}

std::string read_all(std::filesystem::path const& path)
{
	std::ifstream in(path, std::ios::binary);
	if (!in)
	{
		throw std::runtime_error("cannot open '" + path.string() + "'");
	}
	std::stringstream ss;
	ss << in.rdbuf();
	return ss.str();
}

void write_all(std::filesystem::path const& path, std::string const& text)
{
	std::ofstream out(path, std::ios::binary | std::ios::trunc);
	if (!out || !(out << text) || !out.flush())
	{
		throw std::runtime_error("cannot write '" + path.string() + "'");
	}
}

std::uint64_t splitmix64(std::uint64_t x)
{
	x += 0x9e3779b97f4a7c15ULL;
	x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
	x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
	return x ^ (x >> 31);
}

struct Stats
{
	double mean{0};
	double stddev{0};
};

Stats stats(std::vector<double> const& xs)
{
	Stats s;
	if (xs.empty())
	{
		return s;
	}
	for (double x : xs)
	{
		s.mean += x;
	}
	s.mean /= static_cast<double>(xs.size());
	if (xs.size() > 1)
	{
		double ss = 0;
		for (double x : xs)
		{
			ss += (x - s.mean) * (x - s.mean);
		}
		s.stddev = std::sqrt(ss / static_cast<double>(xs.size() - 1));
	}
	return s;
}

} // namespace

// ScenarioConfig ---------------------------------------------------------------

ScenarioConfig ScenarioConfig::paper()
{
	ScenarioConfig cfg;
	cfg.servers = {{ServerId("s1"), 7000}, {ServerId("s2"), 5000}, {ServerId("s3"), 3000}, {ServerId("s4"), 1000}};
	cfg.ladder = sim::Ladder::paper();
	for (std::size_t n = 10; n <= 90; n += 10)
	{
		cfg.client_counts.push_back(n);
	}
	cfg.replicas_per_point = 10;
	cfg.base_seed = 1;
	cfg.xi = 100;
	return cfg;
}

void ScenarioConfig::validate() const
{
	if (servers.empty())
	{
		key_error("servers", "at least one server is required");
	}
	std::set<ServerId> seen;
	for (auto const& [id, bw] : servers)
	{
		if (id.value.empty() || !seen.insert(id).second)
		{
			key_error("servers", "server ids must be unique and nonempty");
		}
		if (bw <= 0)
		{
			key_error("servers", "bandwidth of '" + id.value + "' must be positive");
		}
	}
	try
	{
		ladder.validate();
	}
	catch (std::exception const& e)
	{
		key_error("ladder", e.what());
	}
	if (client_counts.empty())
	{
		key_error("client_counts", "at least one count is required");
	}
	if (std::any_of(client_counts.begin(), client_counts.end(), [](std::size_t n) { return n == 0; }))
	{
		key_error("client_counts", "counts must be positive");
	}
	if (replicas_per_point == 0)
	{
		key_error("replicas", "must be positive");
	}
	if (xi <= 0)
	{
		key_error("xi", "must be positive");
	}
	if (sim.warmup_segments == 0)
	{
		key_error("warmup_segments", "must be positive");
	}
	if (sim.measure_segments == 0)
	{
		key_error("measure_segments", "must be positive");
	}
	sim.validate();
}

ScenarioConfig parse_scenario(std::string_view text)
{
	std::map<std::string, std::string, std::less<>> kv;
	std::size_t line_no = 0;
	while (!text.empty())
	{
		++line_no;
		auto nl = text.find('\n');
		std::string_view line = text.substr(0, nl);
		text.remove_prefix(nl == std::string_view::npos ? text.size() : nl + 1);

		if (auto hash = line.find('#'); hash != std::string_view::npos)
		{
			line = line.substr(0, hash);
		}
		line = trim(line);
		if (line.empty())
		{
			continue;
		}
		auto eq = line.find('=');
		if (eq == std::string_view::npos)
		{
			throw std::invalid_argument("scenario line " + std::to_string(line_no) + ": expected `key = value`");
		}
		std::string key(trim(line.substr(0, eq)));
		std::string value(trim(line.substr(eq + 1)));
		if (key.empty() || value.empty())
		{
			throw std::invalid_argument("scenario line " + std::to_string(line_no) + ": expected `key = value`");
		}
		if (!kv.emplace(key, value).second)
		{
			key_error(key, "duplicate key");
		}
	}

	auto take = [&](std::string_view key) -> std::optional<std::string> {
		auto it = kv.find(key);
		if (it == kv.end())
		{
			return std::nullopt;
		}
		std::string v = it->second;
		kv.erase(it);
		return v;
	};
	auto require = [&](std::string_view key) {
		auto v = take(key);
		if (!v)
		{
			key_error(key, "missing");
		}
		return *v;
	};

	ScenarioConfig cfg;

	std::string const servers = require("servers");
	for (std::string_view item : list("servers", servers))
	{
		auto colon = item.rfind(':');
		if (colon == std::string_view::npos || colon == 0)
		{
			key_error("servers", "expected `id:bandwidth_kbps`, got '" + std::string(item) + "'");
		}
		cfg.servers.emplace_back(ServerId(std::string(trim(item.substr(0, colon)))),
		                         positive<Kbps>("servers", trim(item.substr(colon + 1))));
	}

	std::string const ladder = require("ladder");
	for (std::string_view item : list("ladder", ladder))
	{
		cfg.ladder.bitrates.push_back(positive<Kbps>("ladder", item));
	}
	if (auto labels = take("ladder_labels"))
	{
		for (std::string_view item : list("ladder_labels", *labels))
		{
			cfg.ladder.labels.emplace_back(item);
		}
	}
	else
	{
		for (Kbps b : cfg.ladder.bitrates)
		{
			cfg.ladder.labels.push_back(std::to_string(b) + "k");
		}
	}

	std::string const counts = require("client_counts");
	for (std::string_view item : list("client_counts", counts))
	{
		cfg.client_counts.push_back(positive<std::size_t>("client_counts", item));
	}
	cfg.replicas_per_point = positive<std::size_t>("replicas", require("replicas"));
	cfg.base_seed = number<std::uint64_t>("seed", require("seed"));
	cfg.xi = positive<Kbps>("xi", require("xi"));
	cfg.sim.warmup_segments = positive<std::size_t>("warmup_segments", require("warmup_segments"));
	cfg.sim.measure_segments = positive<std::size_t>("measure_segments", require("measure_segments"));

	if (auto v = take("segment_duration_s"))
	{
		cfg.sim.segment_duration_s = positive<double>("segment_duration_s", *v);
	}
	if (auto v = take("buffer_cap_s"))
	{
		cfg.sim.buffer_cap_s = positive<double>("buffer_cap_s", *v);
	}
	if (auto v = take("panic_buffer_s"))
	{
		cfg.sim.panic_buffer_s = number<double>("panic_buffer_s", *v);
	}
	if (auto v = take("history_window"))
	{
		cfg.sim.history_window = positive<std::size_t>("history_window", *v);
	}
	if (auto v = take("safety_alpha"))
	{
		cfg.sim.safety_alpha = positive<double>("safety_alpha", *v);
	}
	if (auto v = take("start_spread_s"))
	{
		cfg.sim.start_spread_s = number<double>("start_spread_s", *v);
	}

	if (!kv.empty())
	{
		key_error(kv.begin()->first, "unknown key");
	}
	try
	{
		cfg.validate();
	}
	catch (std::invalid_argument const&)
	{
		throw;
	}
	catch (std::exception const& e)
	{
		throw std::invalid_argument(std::string("scenario: ") + e.what());
	}
	return cfg;
}

ScenarioConfig load_scenario(std::string const& path_or_name)
{
	if (path_or_name == "paper")
	{
		return ScenarioConfig::paper();
	}
	return parse_scenario(read_all(path_or_name));
}

std::string format_scenario(ScenarioConfig const& cfg)
{
	auto join = [](auto const& items, auto fmt) {
		std::string out = "[";
		for (std::size_t i = 0; i < items.size(); ++i)
		{
			out += (i ? ", " : "") + fmt(items[i]);
		}
		return out + "]";
	};

	std::string out;
	out += "servers = " + join(cfg.servers, [](auto const& s) { return s.first.value + ":" + std::to_string(s.second); })
	       + "\n";
	out += "ladder = " + join(cfg.ladder.bitrates, [](Kbps b) { return std::to_string(b); }) + "\n";
	out += "ladder_labels = " + join(cfg.ladder.labels, [](std::string const& l) { return l; }) + "\n";
	out += "client_counts = " + join(cfg.client_counts, [](std::size_t n) { return std::to_string(n); }) + "\n";
	out += "replicas = " + std::to_string(cfg.replicas_per_point) + "\n";
	out += "seed = " + std::to_string(cfg.base_seed) + "\n";
	out += "xi = " + std::to_string(cfg.xi) + "\n";
	out += "warmup_segments = " + std::to_string(cfg.sim.warmup_segments) + "\n";
	out += "measure_segments = " + std::to_string(cfg.sim.measure_segments) + "\n";
	out += "segment_duration_s = " + shortest(cfg.sim.segment_duration_s) + "\n";
	out += "buffer_cap_s = " + shortest(cfg.sim.buffer_cap_s) + "\n";
	out += "panic_buffer_s = " + shortest(cfg.sim.panic_buffer_s) + "\n";
	out += "history_window = " + std::to_string(cfg.sim.history_window) + "\n";
	out += "safety_alpha = " + shortest(cfg.sim.safety_alpha) + "\n";
	out += "start_spread_s = " + shortest(cfg.sim.start_spread_s) + "\n";
	return out;
}

void write_scenario(std::filesystem::path const& path, ScenarioConfig const& cfg)
{
	write_all(path, format_scenario(cfg));
}

// Runs -------------------------------------------------------------------------

std::uint64_t derive_seed(std::uint64_t base, std::size_t n_clients, std::size_t replica, std::uint64_t stream)
{
	std::uint64_t h = splitmix64(base);
	h = splitmix64(h ^ static_cast<std::uint64_t>(n_clients));
	h = splitmix64(h ^ static_cast<std::uint64_t>(replica));
	return splitmix64(h ^ stream);
}

std::vector<ClientId> client_ids(std::size_t n)
{
	std::size_t width = std::to_string(n).size();
	std::vector<ClientId> out;
	out.reserve(n);
	for (std::size_t i = 1; i <= n; ++i)
	{
		std::string num = std::to_string(i);
		out.emplace_back("c" + std::string(width - num.size(), '0') + num);
	}
	return out;
}

PointResult run_point(ScenarioConfig const& cfg, std::size_t n_clients, std::size_t replica)
{
	if (std::find(cfg.client_counts.begin(), cfg.client_counts.end(), n_clients) == cfg.client_counts.end())
	{
		throw std::invalid_argument("run_point: " + std::to_string(n_clients) + " is not a scenario client count");
	}
	std::size_t const warmup = cfg.sim.warmup_segments;
	std::size_t const measure = cfg.sim.measure_segments;

	// Random phase.
	std::vector<ClientId> ids = client_ids(n_clients);
	std::vector<game::PlayerRef> players;
	for (ClientId const& id : ids)
	{
		players.push_back({id, cfg.ladder.lowest()});
	}
	game::Collection initial = game::random_collection(players, cfg.servers, derive_seed(cfg.base_seed, n_clients, replica, 0));

	std::vector<std::pair<ClientId, ServerId>> placement;
	orchestrator::AssignmentStore store;
	for (game::Coalition const& c : initial.coalitions())
	{
		for (game::PlayerRef const& p : c.members())
		{
			placement.emplace_back(p.id, c.server_id());
			store.assignments[p.id] = c.server_id();
		}
	}

	sim::SimConfig scfg = cfg.sim;
	scfg.seed = derive_seed(cfg.base_seed, n_clients, replica, 1);
	sim::Simulation simulation(cfg.servers, std::move(placement), cfg.ladder, scfg);

	simulation.run_until_segments(warmup + measure);
	PointResult out;
	out.random = sim::collect_metrics(simulation, sim::SegmentWindow{warmup, warmup + measure});

	// Game phase.
	orchestrator::Orchestrator orch(orchestrator::ServerRegistry(cfg.servers), std::move(store));
	game::GameConfig gcfg;
	gcfg.xi = cfg.xi;
	out.lambdas = sim::snapshot_lambdas(simulation);
	game::TransferLog log = orch.run_game(out.lambdas, gcfg);
	sim::apply_assignment(simulation, log.final);

	std::map<ClientId, sim::SegmentWindow> windows;
	std::size_t horizon = 0;
	for (ClientId const& id : ids)
	{
		std::size_t first = simulation.next_request_index(id);
		windows[id] = {first, first + measure};
		horizon = std::max(horizon, first + measure);
	}
	simulation.run_until_segments(horizon);
	out.game = sim::collect_metrics(simulation, windows);
	out.game.phase = Phase::game;
	out.game.transfers = log.events.size();

	for (MetricsRecord* r : {&out.random, &out.game})
	{
		r->n_clients = n_clients;
		r->replica = replica;
	}
	out.transfers = std::move(log.events);
	out.diagnostics = simulation.diagnostics();
	for (sim::ClientState const& cs : simulation.clients())
	{
		out.total_rebuffer_events += cs.rebuffer_events;
	}
	return out;
}

std::vector<PointResult> sweep(ScenarioConfig const& cfg, std::size_t jobs)
{
	cfg.validate();
	struct Task
	{
		std::size_t n;
		std::size_t replica;
	};
	std::vector<Task> tasks;
	for (std::size_t n : cfg.client_counts)
	{
		for (std::size_t r = 0; r < cfg.replicas_per_point; ++r)
		{
			tasks.push_back({n, r});
		}
	}

	std::vector<PointResult> results(tasks.size());
	std::vector<std::exception_ptr> errors(tasks.size());
	std::atomic<std::size_t> next{0};
	auto worker = [&] {
		for (std::size_t i = next++; i < tasks.size(); i = next++)
		{
			try
			{
				results[i] = run_point(cfg, tasks[i].n, tasks[i].replica);
			}
			catch (...)
			{
				errors[i] = std::current_exception();
			}
		}
	};

	std::size_t const threads = std::clamp<std::size_t>(jobs, 1, tasks.size());
	std::vector<std::thread> pool;
	for (std::size_t t = 1; t < threads; ++t)
	{
		pool.emplace_back(worker);
	}
	worker();
	for (auto& th : pool)
	{
		th.join();
	}

	for (std::size_t i = 0; i < tasks.size(); ++i)
	{
		if (!errors[i])
		{
			continue;
		}
		std::string const where =
			"point n_clients=" + std::to_string(tasks[i].n) + " replica=" + std::to_string(tasks[i].replica);
		try
		{
			std::rethrow_exception(errors[i]);
		}
		catch (std::exception const& e)
		{
			throw std::runtime_error(where + ": " + e.what());
		}
	}
	return results;
}

std::vector<MetricsRecord> records_of(std::vector<PointResult> const& points)
{
	std::vector<MetricsRecord> out;
	out.reserve(points.size() * 2);
	for (PointResult const& p : points)
	{
		out.push_back(p.random);
		out.push_back(p.game);
	}
	return out;
}

// Tables -----------------------------------------------------------------------

Summary summarize(std::vector<MetricsRecord> const& records, ScenarioConfig const& cfg)
{
	if (records.empty())
	{
		throw std::invalid_argument("summarize: no records");
	}

	using Key = std::pair<std::size_t, Phase>;
	std::map<Key, std::vector<MetricsRecord const*>> groups;
	for (MetricsRecord const& r : records)
	{
		groups[{r.n_clients, r.phase}].push_back(&r);
	}

	Kbps total_bw = 0;
	for (auto const& [id, bw] : cfg.servers)
	{
		total_bw += bw;
	}

	Summary s;
	s.fig2 = "n_clients,phase,replicas,mean_bitrate_kbps,stddev_bitrate_kbps,mean_level_index,stddev_level_index\n";
	s.fig3 = "n_clients,phase,server,bandwidth_kbps,mean_clients,proportional_clients\n";
	s.fig4 = "n_clients,replicas,mean_transfers,stddev_transfers\n";

	for (auto const& [key, group] : groups)
	{
		auto const [n, phase] = key;
		std::vector<double> bitrate, level, transfers;
		for (MetricsRecord const* r : group)
		{
			bitrate.push_back(r->mean_bitrate_kbps);
			level.push_back(r->mean_level_index);
			transfers.push_back(static_cast<double>(r->transfers));
		}
		Stats const b = stats(bitrate);
		Stats const l = stats(level);
		std::string const reps = std::to_string(group.size());
		std::string const prefix = std::to_string(n) + "," + std::string(to_string(phase)) + ",";

		s.fig2 += prefix + reps + "," + fixed(b.mean) + "," + fixed(b.stddev) + "," + fixed(l.mean, 4) + ","
		          + fixed(l.stddev, 4) + "\n";

		for (auto const& [id, bw] : cfg.servers)
		{
			double count = 0;
			for (MetricsRecord const* r : group)
			{
				auto it = r->per_server_counts.find(id);
				count += it == r->per_server_counts.end() ? 0.0 : static_cast<double>(it->second);
			}
			double const expected = static_cast<double>(n) * static_cast<double>(bw) / static_cast<double>(total_bw);
			s.fig3 += prefix + id.value + "," + std::to_string(bw) + "," + fixed(count / static_cast<double>(group.size()))
			          + "," + fixed(expected) + "\n";
		}

		if (phase == Phase::game)
		{
			Stats const t = stats(transfers);
			s.fig4 += std::to_string(n) + "," + reps + "," + fixed(t.mean) + "," + fixed(t.stddev) + "\n";
		}
	}
	return s;
}

std::string format_records(std::vector<MetricsRecord> const& records, ScenarioConfig const& cfg)
{
	std::string out = "n_clients,replica,phase,mean_bitrate_kbps,mean_level_index,transfers,rebuffer_events,"
	                  "rebuffer_time_s,samples";
	for (auto const& [id, bw] : cfg.servers)
	{
		out += ",clients_" + id.value;
	}
	out += "\n";
	for (MetricsRecord const& r : records)
	{
		out += std::to_string(r.n_clients) + "," + std::to_string(r.replica) + "," + std::string(to_string(r.phase))
		       + "," + fixed(r.mean_bitrate_kbps) + "," + fixed(r.mean_level_index, 4) + ","
		       + std::to_string(r.transfers) + "," + std::to_string(r.rebuffer_events) + ","
		       + fixed(r.rebuffer_time_s) + "," + std::to_string(r.samples);
		for (auto const& [id, bw] : cfg.servers)
		{
			auto it = r.per_server_counts.find(id);
			out += "," + std::to_string(it == r.per_server_counts.end() ? 0 : it->second);
		}
		out += "\n";
	}
	return out;
}

std::string format_transfers(std::vector<PointResult> const& points)
{
	std::string out = "n_clients,replica,seq,player,from,to,payoff_src_before,payoff_dst_after\n";
	for (PointResult const& p : points)
	{
		std::string const prefix = std::to_string(p.game.n_clients) + "," + std::to_string(p.game.replica) + ",";
		for (game::TransferEvent const& ev : p.transfers)
		{
			out += prefix + format_event(ev) + "\n";
		}
	}
	return out;
}

std::vector<PointResult> run_experiment(ScenarioConfig const& cfg, std::filesystem::path const& out,
                                        std::size_t jobs)
{
	std::vector<PointResult> points = sweep(cfg, jobs);
	std::vector<MetricsRecord> records = records_of(points);
	Summary s = summarize(records, cfg);

	std::filesystem::create_directories(out);
	write_all(out / "fig2.csv", s.fig2);
	write_all(out / "fig3.csv", s.fig3);
	write_all(out / "fig4.csv", s.fig4);
	write_all(out / "records.csv", format_records(records, cfg));
	write_all(out / "transfers.log", format_transfers(points));
	return points;
}

} // namespace coalition_cdn::harness
