//! Two-level stacking: out-of-fold member predictions feed a ridge meta-regressor.

use std::thread;

use super::linalg::{ridge, LinearFit};
use super::model::{window_for, BaseModelSpec, Exogenous, FittedModel, ModelKind, SeriesContext, State};
use super::transform::FittedTransform;
use super::ForecastError;
use crate::scalar::Scalar;
use crate::series::TimeSeries;

#[derive(Debug, Clone)]
pub(crate) struct StackedFit<T> {
    pub members: Vec<FittedModel<T>>,
    pub meta: LinearFit<T>,
}

/// Member prediction expressed in the stack's transformed space.
fn meta_feature<T: Scalar>(transform: &FittedTransform<T>, raw: &[T], pred: T) -> T {
    let d = transform.diff_order;
    let mut tail = raw[raw.len() - d..].to_vec();
    tail.push(pred);
    *transform.forward(&tail).last().expect("non-empty")
}

impl<T: Scalar> StackedFit<T> {
    pub fn predict_next(&self, transform: &FittedTransform<T>, raw: &[T], ctx: &SeriesContext<'_, T>) -> Result<T, ForecastError> {
        let x = self
            .members
            .iter()
            .map(|m| m.predict_next(raw, ctx).map(|p| meta_feature(transform, raw, p)))
            .collect::<Result<Vec<T>, _>>()?;
        Ok(transform.inverse_next(raw, self.meta.predict(&x)))
    }
}

/// Everything needed to audit the out-of-fold construction.
#[derive(Debug, Clone)]
pub struct StackReport<T> {
    pub member_names: Vec<String>,
    /// Series indices that received out-of-fold predictions, ascending.
    pub samples: Vec<usize>,
    /// Fold of each entry of `samples`.
    pub fold_of: Vec<usize>,
    /// `oof[m][j]` is member `m`'s prediction for `samples[j]`.
    pub oof: Vec<Vec<T>>,
    /// `training_rows[k][m]` are the targets member `m` saw while fold `k` was held out.
    pub training_rows: Vec<Vec<Vec<usize>>>,
}

fn fit_member<T: Scalar>(spec: &BaseModelSpec<T>, series: &TimeSeries<T>, exog: &Exogenous<T>, rows: &[usize]) -> Result<FittedModel<T>, ForecastError> {
    FittedModel::fit_rows(spec, series, exog, rows)
        .map_err(|e| ForecastError::MemberFailed { member: spec.name.clone(), message: e.to_string() })
}

/// Fits a [`ModelKind::Stacked`] spec on all rows of `train` with a full lag window.
pub fn stack<T: Scalar>(spec: &BaseModelSpec<T>, train: &TimeSeries<T>, exog: &Exogenous<T>) -> Result<(FittedModel<T>, StackReport<T>), ForecastError> {
    let rows: Vec<usize> = (spec.first_row()..train.len()).collect();
    stack_rows(spec, train, exog, &rows)
}

pub(crate) fn stack_rows<T: Scalar>(
    spec: &BaseModelSpec<T>,
    train: &TimeSeries<T>,
    exog: &Exogenous<T>,
    rows: &[usize],
) -> Result<(FittedModel<T>, StackReport<T>), ForecastError> {
    if spec.kind != ModelKind::Stacked {
        return Err(ForecastError::InvalidInput(format!("{} is not a stacked spec", spec.kind)));
    }
    if spec.members.is_empty() {
        return Err(ForecastError::InvalidInput("stack needs at least one member".into()));
    }
    let k = spec.folds();
    let samples = rows.to_vec();
    if samples.len() < k {
        return Err(ForecastError::TooFewRows { needed: k, actual: samples.len() });
    }
    let n = samples.len();
    let bounds: Vec<usize> = (0..=k).map(|f| f * n / k).collect();
    let fold_of: Vec<usize> = (0..n).map(|j| bounds.partition_point(|&b| b <= j) - 1).collect();
    let members = &spec.members;

    let training_rows: Vec<Vec<Vec<usize>>> = (0..k)
        .map(|f| {
            let outside: Vec<usize> = samples[..bounds[f]].iter().chain(&samples[bounds[f + 1]..]).copied().collect();
            vec![outside; members.len()]
        })
        .collect();

    // Fold fits and the final refits are independent and share only read-only data.
    let (fold_fits, full_fits) = thread::scope(|scope| {
        let fold_handles: Vec<Vec<_>> = (0..k)
            .map(|f| {
                members
                    .iter()
                    .enumerate()
                    .map(|(m, member)| {
                        let rows = &training_rows[f][m];
                        let held = &samples[bounds[f]..bounds[f + 1]];
                        scope.spawn(move || {
                            let model = fit_member(member, train, exog, rows)?;
                            model.predict_in_sample(train, exog, held).map_err(|e| ForecastError::MemberFailed {
                                member: member.name.clone(),
                                message: e.to_string(),
                            })
                        })
                    })
                    .collect()
            })
            .collect();
        let full_handles: Vec<_> = members.iter().map(|member| scope.spawn(|| fit_member(member, train, exog, &samples))).collect();
        let fold_fits: Vec<Vec<Result<Vec<T>, ForecastError>>> = fold_handles
            .into_iter()
            .map(|hs| hs.into_iter().map(|h| h.join().expect("member fit panicked")).collect())
            .collect();
        let full_fits: Vec<Result<FittedModel<T>, ForecastError>> =
            full_handles.into_iter().map(|h| h.join().expect("member fit panicked")).collect();
        (fold_fits, full_fits)
    });

    let mut oof = vec![Vec::with_capacity(n); members.len()];
    for per_member in fold_fits {
        for (m, preds) in per_member.into_iter().enumerate() {
            oof[m].extend(preds?);
        }
    }
    let fitted = full_fits.into_iter().collect::<Result<Vec<_>, _>>()?;

    let sample_values: Vec<T> = samples.iter().map(|&i| train.values[i]).collect();
    let transform = FittedTransform::fit(spec.transform, &sample_values, 0);
    let z = transform.forward(&train.values);
    let design = (0..n).map(|j| {
        let i = samples[j];
        let x: Vec<T> = oof.iter().map(|col| meta_feature(&transform, &train.values[..i], col[j])).collect();
        (x, z[i])
    });
    let meta = ridge(design, members.len(), T::of(spec.meta_lambda()))
        .ok_or_else(|| ForecastError::Degenerate("singular meta-regression".into()))?;

    let model = FittedModel {
        spec: spec.clone(),
        transform,
        state: State::Stacked(StackedFit { members: fitted, meta }),
        window: window_for(train, &samples),
    };
    let report = StackReport {
        member_names: members.iter().map(|m| m.name.clone()).collect(),
        samples,
        fold_of,
        oof,
        training_rows,
    };
    Ok((model, report))
}
