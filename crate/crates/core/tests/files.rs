use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use mfctrl::io;
use mfctrl::simulate::{simulate_agents, Driver, SimConfig};
use mfctrl::{instances, rational_realization, synthesize_positive, Density, FeedbackLaw, Graph};

#[test]
fn files_round_trip_through_disk() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let g = instances::strongly_connected(&mut rng, 5, 0.3);

    let gp = dir.path().join("g/graph.json");
    io::write_text(&gp, &io::graph_to_string(&g)).unwrap();
    assert_eq!(io::read_graph(&gp).unwrap(), g);

    let sched = instances::schedule(&mut rng, g.edge_count(), 4, 3.0, 2.0);
    let sp = dir.path().join("schedule.csv");
    io::write_text(&sp, &io::schedule_to_string(&sched)).unwrap();
    assert_eq!(io::read_schedule(&sp, g.edge_count()).unwrap(), sched);

    let x0 = instances::interior_density(&mut rng, 5, 0.05);
    let driver = Driver::Schedule(&sched);
    let trace = simulate_agents(&g, driver, &x0, &SimConfig::new(40, 3.0, 9).recording()).unwrap();
    io::write_trace(dir.path(), "run", &trace).unwrap();
    let back = io::read_trace(&dir.path().join("run.csv")).unwrap();
    assert_eq!(back.counts, trace.counts);
    assert_eq!(back.log, trace.log);
    assert_eq!(back.seed, 9);
}

#[test]
fn laws_round_trip() {
    let g = Graph::chain(4).unwrap();
    let xeq = Density::new(vec![0.1, 0.1, 0.1, 0.7]).unwrap();
    let y = [0.3, 0.2, 0.4, 0.1];
    let cert = synthesize_positive(&g, &xeq, 0.1, 1e-6).unwrap();
    let gain = FeedbackLaw::from_gain(&g, &cert.k, &xeq).unwrap();
    for law in [
        FeedbackLaw::lemma1_scaled(&g, &xeq, 20.0).unwrap(),
        rational_realization(&g, &gain).unwrap(),
        gain,
    ] {
        let back = io::parse_law(&g, &io::law_to_string(&law)).unwrap();
        for e in 0..g.edge_count() {
            let (s, t) = g.edges()[e];
            assert_eq!(law.local_rate(e, y[s], y[t]).unwrap(), back.local_rate(e, y[s], y[t]).unwrap());
        }
    }
}
