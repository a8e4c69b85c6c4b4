// temporary: lambda-hat distribution and per-rep MSE at the c08 cell
use factor_group::*;

fn main() {
    let options = PipelineOptions::default();
    let mut mean_ppca = 0.0;
    let mut mean_pca = 0.0;
    let mut nonzero = 0;
    for rep in 0..50u64 {
        let config = ScenarioConfig::new(Scenario::S1, 200, 150, 0.5, 1 + rep).unwrap();
        let draw = simulate(&config).unwrap();
        let fitted = fit_pipeline(&draw.panel, &options).unwrap();
        let pca = pca_fit(&draw.panel, fitted.r).unwrap();
        let truth = &draw.true_scores * draw.true_loadings.transpose();
        let mp = mse_common(&common_components(&fitted.fit), &truth).unwrap();
        let mc = mse_common(&common_components(&pca), &truth).unwrap();
        mean_ppca += mp;
        mean_pca += mc;
        if fitted.lambda > 0.0 {
            nonzero += 1;
            println!("rep {rep}: lambda={} mse_ppca={mp:.4} mse_pca={mc:.4}", fitted.lambda);
        }
    }
    println!(
        "mean mse_ppca={:.4} mean mse_pca={:.4} nonzero-lambda reps={nonzero}/50",
        mean_ppca / 50.0,
        mean_pca / 50.0
    );
}
