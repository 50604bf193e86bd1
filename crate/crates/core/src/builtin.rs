// Generated list of the shipped task library.
pub(crate) const BUILTIN_FILES: &[(&str, &str)] = &[
    (
        "data_maintenance/minisql/generic/01_merge.sql",
        include_str!("../library/data_maintenance/minisql/generic/01_merge.sql"),
    ),
    (
        "load/minisql/generic/01_create.sql",
        include_str!("../library/load/minisql/generic/01_create.sql"),
    ),
    (
        "load/minisql/generic/02_copy.sql",
        include_str!("../library/load/minisql/generic/02_copy.sql"),
    ),
    (
        "optimize/minisql/delta/01_optimize.sql",
        include_str!("../library/optimize/minisql/delta/01_optimize.sql"),
    ),
    (
        "optimize/minisql/generic/01_optimize.sql",
        include_str!("../library/optimize/minisql/generic/01_optimize.sql"),
    ),
    (
        "optimize/minisql/hudi/01_optimize.sql",
        include_str!("../library/optimize/minisql/hudi/01_optimize.sql"),
    ),
    (
        "optimize/minisql/iceberg/01_optimize.sql",
        include_str!("../library/optimize/minisql/iceberg/01_optimize.sql"),
    ),
    (
        "single_user/minisql/generic/01_point.sql",
        include_str!("../library/single_user/minisql/generic/01_point.sql"),
    ),
    (
        "single_user/minisql/generic/02_range.sql",
        include_str!("../library/single_user/minisql/generic/02_range.sql"),
    ),
    (
        "single_user/minisql/generic/03_join.sql",
        include_str!("../library/single_user/minisql/generic/03_join.sql"),
    ),
    (
        "single_user/minisql/generic/04_group_by.sql",
        include_str!("../library/single_user/minisql/generic/04_group_by.sql"),
    ),
    (
        "single_user/minisql/generic/05_top_k.sql",
        include_str!("../library/single_user/minisql/generic/05_top_k.sql"),
    ),
    (
        "single_user/minisql/generic/06_count_distinct.sql",
        include_str!("../library/single_user/minisql/generic/06_count_distinct.sql"),
    ),
    (
        "single_user/minisql/generic/07_fact_scan.sql",
        include_str!("../library/single_user/minisql/generic/07_fact_scan.sql"),
    ),
    (
        "single_user/minisql/generic/08_time_travel.sql",
        include_str!("../library/single_user/minisql/generic/08_time_travel.sql"),
    ),
    (
        "time_travel/minisql/generic/01_point.sql",
        include_str!("../library/time_travel/minisql/generic/01_point.sql"),
    ),
    (
        "time_travel/minisql/generic/02_range.sql",
        include_str!("../library/time_travel/minisql/generic/02_range.sql"),
    ),
    (
        "time_travel/minisql/generic/03_join.sql",
        include_str!("../library/time_travel/minisql/generic/03_join.sql"),
    ),
    (
        "time_travel/minisql/generic/04_group_by.sql",
        include_str!("../library/time_travel/minisql/generic/04_group_by.sql"),
    ),
    (
        "time_travel/minisql/generic/05_top_k.sql",
        include_str!("../library/time_travel/minisql/generic/05_top_k.sql"),
    ),
    (
        "time_travel/minisql/generic/06_count_distinct.sql",
        include_str!("../library/time_travel/minisql/generic/06_count_distinct.sql"),
    ),
    (
        "time_travel/minisql/generic/07_fact_scan.sql",
        include_str!("../library/time_travel/minisql/generic/07_fact_scan.sql"),
    ),
    (
        "time_travel/minisql/generic/08_full_rows.sql",
        include_str!("../library/time_travel/minisql/generic/08_full_rows.sql"),
    ),
];
