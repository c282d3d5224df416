#include <coalition_cdn/harness.hpp>

#include <doctest.h>

#include <filesystem>
#include <numeric>

#include <unistd.h>

using namespace coalition_cdn;
using namespace coalition_cdn::harness;

namespace {

// Two servers, tiny windows: fast enough for unit tests.
ScenarioConfig small()
{
	ScenarioConfig cfg;
	cfg.servers = {{ServerId("a"), 7000}, {ServerId("b"), 1000}};
	cfg.ladder = sim::Ladder::paper();
	cfg.client_counts = {2, 5};
	cfg.replicas_per_point = 2;
	cfg.base_seed = 9;
	cfg.sim.warmup_segments = 3;
	cfg.sim.measure_segments = 5;
	return cfg;
}

std::string const paper_text = "servers = [s1:7000, s2:5000, s3:3000, s4:1000]\n"
                               "ladder = [1360, 3265, 6117, 9330]\n"
                               "client_counts = [10, 20]\n"
                               "replicas = 10\n"
                               "seed = 1\n"
                               "xi = 100\n"
                               "warmup_segments = 15\n"
                               "measure_segments = 60\n";

std::string replace_line(std::string text, std::string const& key, std::string const& line)
{
	auto pos = text.find(key + " =");
	REQUIRE(pos != std::string::npos);
	auto end = text.find('\n', pos);
	return text.replace(pos, end - pos, line);
}

MetricsRecord record(std::size_t n, Phase phase, double bitrate, std::size_t transfers = 0)
{
	MetricsRecord r;
	r.n_clients = n;
	r.phase = phase;
	r.mean_bitrate_kbps = bitrate;
	r.transfers = transfers;
	r.per_server_counts[ServerId("a")] = n;
	r.per_server_counts[ServerId("b")] = 0;
	return r;
}

} // namespace

TEST_SUITE("scenario")
{
	TEST_CASE("built-in scenario defaults")
	{
		auto cfg = load_scenario("paper");
		REQUIRE(cfg.servers.size() == 4);
		CHECK(cfg.servers[0].second == 7000);
		CHECK(cfg.servers[1].second == 5000);
		CHECK(cfg.servers[2].second == 3000);
		CHECK(cfg.servers[3].second == 1000);
		CHECK(cfg.ladder.bitrates == std::vector<Kbps>{1360, 3265, 6117, 9330});
		CHECK(cfg.client_counts == std::vector<std::size_t>{10, 20, 30, 40, 50, 60, 70, 80, 90});
		CHECK(cfg.replicas_per_point == 10);
		CHECK(cfg.xi == 100);
		CHECK(cfg.sim.warmup_segments == 15);
		CHECK(cfg.sim.measure_segments == 60);
	}

	TEST_CASE("parse")
	{
		auto cfg = parse_scenario("# comment\n" + paper_text + "start_spread_s = 0.5  # staggered\n");
		CHECK(cfg.servers[3] == std::pair{ServerId("s4"), Kbps{1000}});
		CHECK(cfg.client_counts == std::vector<std::size_t>{10, 20});
		CHECK(cfg.sim.start_spread_s == 0.5);
		CHECK(cfg.ladder.labels.size() == 4);
	}

	TEST_CASE("errors name the key")
	{
		auto fails_on = [](std::string const& text, std::string const& key) {
			try
			{
				parse_scenario(text);
				FAIL("accepted: " << text);
			}
			catch (std::invalid_argument const& e)
			{
				CHECK_MESSAGE(std::string(e.what()).find("'" + key + "'") != std::string::npos, e.what());
			}
		};
		fails_on(replace_line(paper_text, "xi", "xi = 0"), "xi");
		fails_on(replace_line(paper_text, "xi", "xi = -5"), "xi");
		fails_on(replace_line(paper_text, "replicas", "replicas = 0"), "replicas");
		fails_on(replace_line(paper_text, "client_counts", "client_counts = [10, 0]"), "client_counts");
		fails_on(replace_line(paper_text, "client_counts", "client_counts = []"), "client_counts");
		fails_on(replace_line(paper_text, "servers", "servers = [s1:0]"), "servers");
		fails_on(replace_line(paper_text, "servers", "servers = [s1:7000, s1:5000]"), "servers");
		fails_on(replace_line(paper_text, "ladder", "ladder = [3265, 1360]"), "ladder");
		fails_on(replace_line(paper_text, "seed", "# no seed"), "seed");
		fails_on(paper_text + "xi = 200\n", "xi");
		fails_on(paper_text + "colour = blue\n", "colour");
		fails_on(paper_text + "safety_alpha = 0\n", "safety_alpha");
	}

	TEST_CASE("round trip")
	{
		auto path = std::filesystem::temp_directory_path() / ("scenario." + std::to_string(::getpid()));
		for (ScenarioConfig cfg : {ScenarioConfig::paper(), small()})
		{
			cfg.sim.safety_alpha = 0.85;
			cfg.sim.start_spread_s = 0.1;
			write_scenario(path, cfg);
			CHECK(load_scenario(path.string()) == cfg);
		}
		std::filesystem::remove(path);
	}
}

TEST_SUITE("run_point")
{
	TEST_CASE("client ids sort numerically")
	{
		auto ids = client_ids(100);
		CHECK(ids.front() == ClientId("c001"));
		CHECK(ids.back() == ClientId("c100"));
		CHECK(std::is_sorted(ids.begin(), ids.end()));
		CHECK(client_ids(9).back() == ClientId("c9"));
	}

	TEST_CASE("seeds differ per coordinate")
	{
		CHECK(derive_seed(1, 10, 0, 0) != derive_seed(1, 10, 1, 0));
		CHECK(derive_seed(1, 10, 0, 0) != derive_seed(1, 20, 0, 0));
		CHECK(derive_seed(1, 10, 0, 0) != derive_seed(1, 10, 0, 1));
		CHECK(derive_seed(1, 10, 0, 0) != derive_seed(2, 10, 0, 0));
		CHECK(derive_seed(1, 10, 0, 0) == derive_seed(1, 10, 0, 0));
	}

	TEST_CASE("matched windows and conservation")
	{
		auto cfg = small();
		for (std::size_t n : cfg.client_counts)
		{
			PointResult p = run_point(cfg, n, 1);
			CHECK(p.random.phase == Phase::random);
			CHECK(p.game.phase == Phase::game);
			CHECK(p.random.samples == n * cfg.sim.measure_segments);
			CHECK(p.game.samples == p.random.samples);
			CHECK(p.game.transfers == p.transfers.size());
			CHECK(p.random.transfers == 0);
			for (MetricsRecord const* r : {&p.random, &p.game})
			{
				CHECK(r->n_clients == n);
				CHECK(r->replica == 1);
				std::size_t sum = 0;
				for (auto const& [s, c] : r->per_server_counts)
				{
					sum += c;
				}
				CHECK(sum == n);
			}
			CHECK(p.diagnostics.capacity_violations == 0);
			CHECK(p.diagnostics.buffer_violations == 0);
		}
	}

	TEST_CASE("deterministic")
	{
		auto cfg = small();
		PointResult a = run_point(cfg, 5, 0);
		PointResult b = run_point(cfg, 5, 0);
		CHECK(format_records(records_of({a}), cfg) == format_records(records_of({b}), cfg));
		CHECK(format_transfers({a}) == format_transfers({b}));
	}

	TEST_CASE("count outside the scenario is rejected")
	{
		CHECK_THROWS_AS(run_point(small(), 3, 0), std::invalid_argument);
	}
}

TEST_SUITE("sweep")
{
	TEST_CASE("single point gives two records")
	{
		auto cfg = small();
		cfg.client_counts = {2};
		cfg.replicas_per_point = 1;
		CHECK(records_of(sweep(cfg)).size() == 2);
	}

	TEST_CASE("ordering and parallel merge")
	{
		auto cfg = small();
		auto serial = sweep(cfg, 1);
		auto parallel = sweep(cfg, 3);
		auto records = records_of(serial);
		REQUIRE(records.size() == 8);
		for (std::size_t i = 0; i < records.size(); ++i)
		{
			CHECK(records[i].n_clients == cfg.client_counts[i / 4]);
			CHECK(records[i].replica == (i / 2) % 2);
			CHECK(records[i].phase == (i % 2 ? Phase::game : Phase::random));
		}
		CHECK(format_records(records, cfg) == format_records(records_of(parallel), cfg));
		CHECK(format_transfers(serial) == format_transfers(parallel));
		auto s1 = summarize(records, cfg);
		auto s2 = summarize(records_of(parallel), cfg);
		CHECK(s1.fig2 == s2.fig2);
		CHECK(s1.fig3 == s2.fig3);
		CHECK(s1.fig4 == s2.fig4);
	}

	TEST_CASE("invalid config is rejected before any point runs")
	{
		auto cfg = small();
		cfg.sim.safety_alpha = -1;
		CHECK_THROWS_AS(sweep(cfg), std::invalid_argument);
	}
}

TEST_SUITE("summarize")
{
	ScenarioConfig const cfg = small();

	TEST_CASE("mean and sample stddev")
	{
		std::vector<MetricsRecord> rs = {record(2, Phase::random, 1000), record(2, Phase::random, 2000),
		                                 record(2, Phase::random, 3000), record(2, Phase::game, 1500, 4)};
		auto s = summarize(rs, cfg);
		CHECK(s.fig2 == "n_clients,phase,replicas,mean_bitrate_kbps,stddev_bitrate_kbps,mean_level_index,"
		                "stddev_level_index\n"
		                "2,random,3,2000.000,1000.000,0.0000,0.0000\n"
		                "2,game,1,1500.000,0.000,0.0000,0.0000\n");
		CHECK(s.fig4 == "n_clients,replicas,mean_transfers,stddev_transfers\n2,1,4.000,0.000\n");
		CHECK(s.fig3 == "n_clients,phase,server,bandwidth_kbps,mean_clients,proportional_clients\n"
		                "2,random,a,7000,2.000,1.750\n"
		                "2,random,b,1000,0.000,0.250\n"
		                "2,game,a,7000,2.000,1.750\n"
		                "2,game,b,1000,0.000,0.250\n");
	}

	TEST_CASE("fig3 groups sum to the client count")
	{
		auto s = summarize(records_of(sweep(cfg)), cfg);
		std::map<std::string, double> sums;
		std::size_t pos = s.fig3.find('\n') + 1;
		while (pos < s.fig3.size())
		{
			auto end = s.fig3.find('\n', pos);
			std::string line = s.fig3.substr(pos, end - pos);
			pos = end + 1;
			std::vector<std::string> f;
			std::size_t a = 0;
			for (std::size_t b; (b = line.find(',', a)) != std::string::npos; a = b + 1)
			{
				f.push_back(line.substr(a, b - a));
			}
			f.push_back(line.substr(a));
			sums[f[0] + "," + f[1]] += std::stod(f[4]);
		}
		REQUIRE(sums.size() == 4);
		for (auto const& [key, sum] : sums)
		{
			CHECK(sum == doctest::Approx(std::stod(key.substr(0, key.find(',')))));
		}
	}

	TEST_CASE("empty input")
	{
		CHECK_THROWS_AS(summarize({}, cfg), std::invalid_argument);
	}
}
