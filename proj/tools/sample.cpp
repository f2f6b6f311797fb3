// Draws records from a network file and writes them as CSV.
#include <iostream>

#include <CLI11.hpp>

#include "fedbn/dataset.hpp"
#include "fedbn/network.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Sample records from a network file"};
    std::string network;
    std::string out;
    size_t records = 1000;
    uint64_t seed = 0;
    app.add_option("--network", network, "network file")->required()->check(CLI::ExistingFile);
    app.add_option("--records", records, "number of records");
    app.add_option("--seed", seed, "sampling seed")->required();
    app.add_option("--out", out, "output CSV (stdout when omitted)");
    CLI11_PARSE(app, argc, argv);
    try {
        const auto net = fedbn::load_network_file(network).network();
        fedbn::Rng rng(seed);
        fedbn::Dataset ds;
        ds.schema = net.structure().nodes();
        ds.records = fedbn::sample_records(net, records, rng);
        if (out.empty()) {
            std::cout << fedbn::dataset_to_csv(ds);
        } else {
            fedbn::write_csv(out, ds);
        }
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "fedbn-sample: " << e.what() << "\n";
        return 1;
    }
}
