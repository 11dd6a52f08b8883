/// Weights of the dense reward terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardCoefficients {
    /// object–goal distance weight
    pub c_og: f64,
    /// robot–object distance weight
    pub c_ro: f64,
    /// robot–goal distance weight
    pub c_rg: f64,
    /// collision penalty
    pub p: f64,
}

pub const SUCCESS_BONUS: f64 = 20.0;

/// Distances entering the dense reward. All nonnegative.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Distances {
    pub d_og: f64,
    pub d_ro: f64,
    pub d_rg: f64,
}

/// `-c_og·d_og - c_ro·d_ro - c_rg·d_rg - p·[collision] + 20·[success]`
pub fn dense_reward(
    distances: Distances,
    collision: bool,
    success: bool,
    coeffs: &RewardCoefficients,
) -> f64 {
    let mut r = -coeffs.c_og * distances.d_og - coeffs.c_ro * distances.d_ro
        - coeffs.c_rg * distances.d_rg;
    if collision {
        r -= coeffs.p;
    }
    if success {
        r += SUCCESS_BONUS;
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;

    const ALL_ON: RewardCoefficients = RewardCoefficients {
        c_og: 1.0,
        c_ro: 1.0,
        c_rg: 1.0,
        p: 2.0,
    };

    #[test]
    fn zero_inputs_give_zero() {
        assert_eq!(dense_reward(Distances::default(), false, false, &ALL_ON), 0.0);
    }

    #[test]
    fn collision_penalty() {
        assert_eq!(dense_reward(Distances::default(), true, false, &ALL_ON), -2.0);
    }

    #[test]
    fn success_with_distances() {
        let coeffs = RewardCoefficients {
            c_og: 1.0,
            c_ro: 1.0,
            c_rg: 0.0,
            p: 0.0,
        };
        let d = Distances {
            d_og: 0.1,
            d_ro: 0.2,
            d_rg: 0.7,
        };
        assert!((dense_reward(d, false, true, &coeffs) - 19.7).abs() < 1e-12);
    }

    #[test]
    fn success_only_bonus() {
        assert_eq!(dense_reward(Distances::default(), false, true, &ALL_ON), 20.0);
    }

    #[test]
    fn object_goal_term_alone() {
        let coeffs = RewardCoefficients {
            c_og: 1.0,
            c_ro: 0.0,
            c_rg: 0.0,
            p: 2.0,
        };
        let d = Distances {
            d_og: 0.5,
            ..Default::default()
        };
        assert_eq!(dense_reward(d, false, false, &coeffs), -0.5);
    }
}
