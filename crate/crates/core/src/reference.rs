//! Published results and per-case solver settings for the three studies.

use crate::problem::Study;

/// One row of a performance table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PublishedResult {
    pub final_mass: f64,
    pub thrust_time_h: f64,
    pub revolutions: f64,
    pub thrust_arcs: usize,
    pub delta_v: f64,
    /// Prior-work ΔV, tabulated for cases 1, 3, 5 and 7.
    pub prior_delta_v: Option<f64>,
}

const fn row(
    final_mass: f64,
    thrust_time_h: f64,
    revolutions: f64,
    thrust_arcs: usize,
    delta_v: f64,
    prior_delta_v: Option<f64>,
) -> PublishedResult {
    PublishedResult { final_mass, thrust_time_h, revolutions, thrust_arcs, delta_v, prior_delta_v }
}

const MEO: [PublishedResult; 7] = [
    row(674.9651, 0.0880, 0.5196, 2, 3854.9, Some(3863.0)),
    row(674.7867, 0.1744, 0.5352, 2, 3857.5, None),
    row(668.2949, 0.8941, 0.7398, 2, 3952.3, Some(3970.0)),
    row(653.0154, 1.8816, 0.8768, 2, 4179.1, None),
    row(624.2352, 10.2132, 4.9579, 4, 4621.2, Some(4731.0)),
    row(607.2275, 21.2975, 9.1414, 6, 4892.1, None),
    row(606.9697, 106.4970, 32.8742, 9, 4896.2, Some(5122.0)),
];

const HEO: [PublishedResult; 7] = [
    row(716.2925, 0.0766, 0.5202, 2, 3272.2, Some(3271.0)),
    row(715.7138, 0.1525, 0.5387, 2, 3280.1, None),
    row(699.2824, 0.8140, 0.8359, 2, 3507.8, Some(3555.0)),
    row(663.1665, 1.8242, 0.9240, 2, 4027.9, None),
    row(657.2695, 9.2494, 4.9570, 6, 4115.6, Some(5271.0)),
    row(645.0881, 19.1564, 9.0376, 9, 4298.9, None),
    row(576.7825, 114.7384, 39.0413, 17, 5396.5, Some(6109.0)),
];

const GEO: [PublishedResult; 7] = [
    row(656.7935, 0.0925, 0.5195, 2, 4122.6, Some(4127.0)),
    row(656.3850, 0.1857, 0.5408, 2, 4128.7, None),
    row(646.4416, 0.9614, 0.7694, 2, 4278.4, Some(4308.0)),
    row(626.2787, 2.0140, 0.9380, 2, 4589.1, None),
    row(619.0090, 10.3158, 4.8044, 5, 4703.6, Some(5167.0)),
    row(583.7997, 22.5498, 8.0286, 6, 5277.9, None),
    row(579.8979, 114.0104, 110.0091, 8, 5343.7, Some(5698.0)),
];

/// Published result for a study and case (1 to 7).
pub fn published(study: Study, case: usize) -> Option<PublishedResult> {
    let table = match study {
        Study::Meo => &MEO,
        Study::Heo => &HEO,
        Study::Geo => &GEO,
    };
    table.get(case.checked_sub(1)?).copied()
}

/// Jump threshold η and initial interval count M used for each case.
pub fn initial_setup(study: Study, case: usize) -> Option<(f64, usize)> {
    let table: [(f64, usize); 7] = match study {
        Study::Meo => [(0.1, 130), (0.1, 100), (0.1, 10), (0.01, 60), (0.01, 50), (0.01, 40), (0.1, 50)],
        Study::Heo => [(0.01, 170), (0.001, 70), (0.01, 90), (0.01, 50), (0.01, 30), (0.001, 140), (0.1, 60)],
        Study::Geo => [(0.1, 90), (0.1, 190), (0.01, 10), (0.01, 50), (0.01, 40), (0.001, 150), (0.1, 110)],
    };
    table.get(case.checked_sub(1)?).copied()
}

/// Collocation points per initial mesh interval.
pub const INITIAL_POINTS: usize = 3;
