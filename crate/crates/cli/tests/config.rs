use hdg_cli::StudyConfig;
use proptest::prelude::*;

fn text(case: &str, k: usize, levels: &[usize], tau: f64, tn: f64, flags: [bool; 3], seed: u64, band: Option<(f64, f64)>) -> String {
    let levels: Vec<String> = levels.iter().map(|l| l.to_string()).collect();
    let mut s = format!(
        "[problem]\ncase = \"{case}\"\nk = {k}\n\n[mesh]\nlevels = [{}]\n\n[stabilization]\ntau = {tau:?}\ntau_n = {tn:?}\n\n\
         [checks]\nmonolithic = {}\ninf_sup = {}\nerror_bounds = {}\nseed = {seed}\n",
        levels.join(", "),
        flags[0],
        flags[1],
        flags[2]
    );
    if let Some((lo, hi)) = band {
        s += &format!("rate_error = \"p\"\nmin_rate = {lo:?}\nmax_rate = {hi:?}\n");
    }
    s
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn parse_validate_round_trip_is_stable(
        case in prop::sample::select(vec!["poisson-smooth", "cdr-smooth", "stokes-smooth", "oseen-uniform", "poisson-mixed"]),
        k in 0usize..5,
        levels in prop::collection::vec(1usize..64, 1..6),
        tau in 0.01f64..100.0,
        tn in 0.01f64..100.0,
        flags in any::<[bool; 3]>(),
        seed in 0..=i64::MAX as u64,
        band in prop::option::of((0.0f64..2.0, 2.0f64..4.0)),
    ) {
        let cfg = StudyConfig::parse(&text(case, k, &levels, tau, tn, flags, seed, band)).unwrap();
        let again = StudyConfig::parse(&cfg.to_text()).unwrap();
        prop_assert_eq!(&again, &cfg);
        prop_assert_eq!(again.to_text(), cfg.to_text());
        prop_assert_eq!(again.hash(), cfg.hash());
        prop_assert_eq!(cfg.stabilization.tau, tau);
        prop_assert_eq!(cfg.checks.seed, seed);
    }

    #[test]
    fn any_unknown_key_is_rejected(key in "[a-z_]{1,12}", section in 0usize..5) {
        let known = [
            vec!["case", "k", "equation", "beta", "reaction", "nu"],
            vec!["generator", "levels"],
            vec!["tau", "tau_n", "tau_t"],
            vec!["monolithic", "inf_sup", "inf_sup_method", "error_bounds", "rate_error", "min_rate", "max_rate", "seed"],
            vec!["dir", "plot_data"],
        ];
        prop_assume!(!known[section].contains(&key.as_str()));
        let names = ["problem", "mesh", "stabilization", "checks", "output"];
        let mut base = text("poisson-smooth", 1, &[2, 4, 8], 1.0, 1.0, [false; 3], 0, None);
        base += "\n[output]\ndir = \"o\"\n";
        let header = format!("[{}]\n", names[section]);
        let at = base.find(&header).unwrap() + header.len();
        base.insert_str(at, &format!("{key} = 1\n"));
        prop_assert!(StudyConfig::parse(&base).is_err());
    }

    #[test]
    fn seeds_beyond_the_signed_range_are_rejected(seed in (i64::MAX as u64 + 1)..=u64::MAX) {
        let mut cfg = StudyConfig::parse(&text("poisson-smooth", 1, &[2], 1.0, 1.0, [false; 3], 0, None)).unwrap();
        cfg.checks.seed = seed;
        prop_assert!(cfg.validate().is_err());
    }
}
