//! Kalman filter on the stacked pair state `(x¹, x²)`.
//!
//! With [`FeedbackMode::Full`] every update uses the optimal joint gain: this
//! is the centralized filter that serves as the accuracy reference. With
//! [`FeedbackMode::NoFeedback`] the `y²` update is restricted to the feeding
//! block and the `y¹` update to the receiving block (Joseph-form updates keep
//! the joint covariance consistent for these deliberately suboptimal gains).
//! The restricted variant evolves exactly the same receiving mean, receiving
//! covariance, and cross-covariance as the cascaded filter running with the
//! exact cross-transition factor, which is what makes it a useful oracle.

use nalgebra::{DMatrix, DVector};

use crate::filters::linearized::LinearCascadeModel;
use crate::gaussian::{symmetrize, Gaussian, PsdFactor};
use crate::Result;

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum FeedbackMode {
    /// Optimal joint gains everywhere (centralized reference).
    Full,
    /// `y²` corrects only `x²`; `y¹` corrects only `x¹`.
    NoFeedback,
}

pub struct StackedKf {
    state: Gaussian,
    n1: usize,
    n2: usize,
    mode: FeedbackMode,
    a: DMatrix<f64>,
    q: DMatrix<f64>,
    h1: DMatrix<f64>,
    r1: DMatrix<f64>,
    h2: DMatrix<f64>,
    r2: DMatrix<f64>,
}

impl StackedKf {
    /// Builds the stacked filter from per-block initial beliefs (zero initial
    /// cross-covariance).
    pub fn new(
        model: &LinearCascadeModel,
        init1: &Gaussian,
        init2: &Gaussian,
        mode: FeedbackMode,
    ) -> Self {
        let n1 = model.dim1();
        let n2 = model.dim2();
        let n = n1 + n2;

        let mut a = DMatrix::zeros(n, n);
        a.view_mut((0, 0), (n1, n1)).copy_from(&model.a1);
        a.view_mut((0, n1), (n1, n2)).copy_from(&model.b1);
        a.view_mut((n1, n1), (n2, n2)).copy_from(&model.a2);

        let mut q = DMatrix::zeros(n, n);
        q.view_mut((0, 0), (n1, n1))
            .copy_from(&(&model.l1 * &model.q1 * model.l1.transpose()));
        q.view_mut((n1, n1), (n2, n2))
            .copy_from(&(&model.l2 * &model.q2 * model.l2.transpose()));

        let m1 = model.c1.nrows();
        let mut h1 = DMatrix::zeros(m1, n);
        h1.view_mut((0, 0), (m1, n1)).copy_from(&model.c1);
        h1.view_mut((0, n1), (m1, n2)).copy_from(&model.d1);
        let r1 = symmetrize(&(&model.m1 * &model.r1 * model.m1.transpose()));

        let m2 = model.c2.nrows();
        let mut h2 = DMatrix::zeros(m2, n);
        h2.view_mut((0, n1), (m2, n2)).copy_from(&model.c2);
        let r2 = symmetrize(&(&model.m2 * &model.r2 * model.m2.transpose()));

        let mut mean = DVector::zeros(n);
        mean.rows_mut(0, n1).copy_from(init1.mean());
        mean.rows_mut(n1, n2).copy_from(init2.mean());
        let mut cov = DMatrix::zeros(n, n);
        cov.view_mut((0, 0), (n1, n1)).copy_from(init1.cov());
        cov.view_mut((n1, n1), (n2, n2)).copy_from(init2.cov());

        Self {
            state: Gaussian::new(mean, cov),
            n1,
            n2,
            mode,
            a,
            q,
            h1,
            r1,
            h2,
            r2,
        }
    }

    pub fn joint(&self) -> &Gaussian {
        &self.state
    }

    /// Marginal belief over the receiving block `x¹`.
    pub fn marginal1(&self) -> Gaussian {
        Gaussian::new(
            self.state.mean().rows(0, self.n1).into_owned(),
            self.state.cov().view((0, 0), (self.n1, self.n1)).into_owned(),
        )
    }

    /// Marginal belief over the feeding block `x²`.
    pub fn marginal2(&self) -> Gaussian {
        Gaussian::new(
            self.state.mean().rows(self.n1, self.n2).into_owned(),
            self.state
                .cov()
                .view((self.n1, self.n1), (self.n2, self.n2))
                .into_owned(),
        )
    }

    /// Cross-covariance block `Cov(x¹, x²)`.
    pub fn cross12(&self) -> DMatrix<f64> {
        self.state
            .cov()
            .view((0, self.n1), (self.n1, self.n2))
            .into_owned()
    }

    pub fn predict(&mut self) {
        let mean = &self.a * self.state.mean();
        let cov = symmetrize(&(&self.a * self.state.cov() * self.a.transpose() + &self.q));
        self.state = Gaussian::new(mean, cov);
    }

    /// Applies a measurement with Joseph-form covariance propagation, valid
    /// for any (not necessarily optimal) gain.
    fn joseph_update(
        &mut self,
        h: &DMatrix<f64>,
        r: &DMatrix<f64>,
        gain: &DMatrix<f64>,
        y: &DVector<f64>,
    ) {
        let innovation = y - h * self.state.mean();
        let mean = self.state.mean() + gain * &innovation;
        let n = self.state.dim();
        let i_kh = DMatrix::identity(n, n) - gain * h;
        let cov = symmetrize(
            &(&i_kh * self.state.cov() * i_kh.transpose() + gain * r * gain.transpose()),
        );
        self.state = Gaussian::new(mean, cov);
    }

    fn optimal_gain(&self, h: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let sigma_xy = self.state.cov() * h.transpose();
        let innovation_cov = h * &sigma_xy + r;
        let chol = PsdFactor::new(&innovation_cov)?;
        Ok(chol.solve_mat(&sigma_xy.transpose()).transpose())
    }

    /// Feeding measurement `y² = C²x² + M²ν²`.
    pub fn update_feeding(&mut self, y2: &DVector<f64>) -> Result<()> {
        let mut gain = self.optimal_gain(&self.h2, &self.r2)?;
        if self.mode == FeedbackMode::NoFeedback {
            gain.rows_mut(0, self.n1).fill(0.0);
        }
        let (h, r) = (self.h2.clone(), self.r2.clone());
        self.joseph_update(&h, &r, &gain, y2);
        Ok(())
    }

    /// Receiving measurement `y¹ = C¹x¹ + D¹x² + M¹ν¹`.
    pub fn update_receiving(&mut self, y1: &DVector<f64>) -> Result<()> {
        let mut gain = self.optimal_gain(&self.h1, &self.r1)?;
        if self.mode == FeedbackMode::NoFeedback {
            gain.rows_mut(self.n1, self.n2).fill(0.0);
        }
        let (h, r) = (self.h1.clone(), self.r1.clone());
        self.joseph_update(&h, &r, &gain, y1);
        Ok(())
    }

    /// One full cycle: predict, absorb `y²`, absorb `y¹`.
    pub fn step(&mut self, y2: &DVector<f64>, y1: &DVector<f64>) -> Result<()> {
        self.predict();
        self.update_feeding(y2)?;
        self.update_receiving(y1)?;
        Ok(())
    }
}
