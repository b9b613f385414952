use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use log::info;
use spectag_core::classifier::MulticlassModel;
use spectag_core::imaging::{CalibrationPair, ChannelStack, GroundTruth};
use spectag_core::pipeline::{
    evaluate_model, leave_one_organ_out, operating_point, prepare_dataset, tau_sweep, train_model,
    write_confusion_csv, write_cv_csv, write_loo_csv, write_overlays, write_report, write_sweep_csv, write_synthetic_dataset,
    DatasetManifest, ImageInfo, ImageSource, Modality, PipelineConfig, PreparedDataset, Split, SynthSpec,
};
use spectag_core::Error;

use crate::{ConfigArgs, EvalArgs, FeaturesArgs, LooArgs, SweepArgs, SynthArgs, TrainArgs};

/// View of a source restricted to the images of some splits, so commands
/// only pay for the images they use.
struct SplitSource<'a> {
    inner: &'a dyn ImageSource,
    indices: Vec<usize>,
    infos: Vec<ImageInfo>,
}

impl<'a> SplitSource<'a> {
    fn new(inner: &'a dyn ImageSource, splits: &[Split]) -> Self {
        let (indices, infos) = inner.images().into_iter().enumerate().filter(|(_, i)| splits.contains(&i.split)).unzip();
        Self { inner, indices, infos }
    }
}

impl ImageSource for SplitSource<'_> {
    fn classes(&self) -> &[String] {
        self.inner.classes()
    }

    fn images(&self) -> Vec<ImageInfo> {
        self.infos.clone()
    }

    fn calibration(&self) -> spectag_core::Result<CalibrationPair> {
        self.inner.calibration()
    }

    fn load(&self, index: usize) -> spectag_core::Result<(ChannelStack, GroundTruth)> {
        self.inner.load(self.indices[index])
    }
}

fn load_config(args: &ConfigArgs) -> Result<PipelineConfig> {
    let mut config = match &args.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(m) = args.metric {
        config.metric = m.into();
    }
    if let Some(t) = args.tau {
        config.tau = t;
    }
    if let Some(s) = args.seed {
        config.svm.seed = s;
    }
    config.validate()?;
    Ok(config)
}

fn prepare(manifest: &Path, config: &PipelineConfig, splits: &[Split], with_rgb: bool) -> Result<PreparedDataset> {
    let m = DatasetManifest::load(manifest).with_context(|| format!("loading manifest {}", manifest.display()))?;
    let source = SplitSource::new(&m, splits);
    if source.infos.is_empty() {
        return Err(Error::InvalidParameter(format!("manifest has no images in split(s) {splits:?}")).into());
    }
    info!("preparing {} images", source.infos.len());
    Ok(prepare_dataset(&source, config, with_rgb)?)
}

/// `<dir>/<stem>.<suffix>` for a model path `<dir>/<stem>.json`.
fn sibling(model: &Path, suffix: &str) -> PathBuf {
    let stem = model.file_stem().map_or_else(|| "model".into(), |s| s.to_string_lossy().into_owned());
    model.with_file_name(format!("{stem}.{suffix}"))
}

fn rgb_model_path(model: &Path) -> PathBuf {
    sibling(model, "rgb.json")
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

pub fn synth(args: SynthArgs) -> Result<()> {
    let mut spec: SynthSpec = match &args.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            toml::from_str(&text).map_err(|e| Error::InvalidParameter(format!("{}: {e}", p.display())))?
        }
        None => SynthSpec::default(),
    };
    if let Some(s) = args.seed {
        spec.seed = s;
    }
    let m = write_synthetic_dataset(&spec, &args.out)?;
    println!(
        "wrote {} train and {} test images to {}",
        m.count(Split::Train),
        m.count(Split::Test),
        args.out.display()
    );
    Ok(())
}

pub fn train(args: TrainArgs) -> Result<()> {
    let config = load_config(&args.cfg)?;
    let ds = prepare(&args.manifest, &config, &[Split::Train], args.compare_rgb)?;
    let mut jobs = vec![(Modality::Mi, args.model.clone())];
    if args.compare_rgb {
        jobs.push((Modality::Rgb, rgb_model_path(&args.model)));
    }
    for (modality, path) in jobs {
        let (model, grid) = train_model(&ds, modality, &config)?;
        model.save(&path)?;
        let cv = sibling(&path, "cv.csv");
        write_cv_csv(&cv, &grid)?;
        println!(
            "{}: C = {}, gamma = {}, CV accuracy {:.4}; model {}, CV table {}",
            modality.name(),
            model.c,
            model.gamma,
            grid.accuracy,
            path.display(),
            cv.display()
        );
    }
    Ok(())
}

pub fn eval(args: EvalArgs) -> Result<()> {
    let config = load_config(&args.cfg)?;
    let mut jobs = vec![(Modality::Mi, MulticlassModel::load(&args.model)?)];
    if args.compare_rgb {
        jobs.push((Modality::Rgb, MulticlassModel::load(&rgb_model_path(&args.model))?));
    }
    let ds = prepare(&args.manifest, &config, &[Split::Test], args.compare_rgb)?;
    create_dir(&args.out)?;
    let thr = config.threshold();
    for (modality, model) in jobs {
        let name = modality.name();
        let (report, results) = evaluate_model(&ds, &model, modality, &config)?;
        write_report(&args.out.join(format!("report_{name}.json")), &report)?;
        write_sweep_csv(&args.out.join(format!("sweep_{name}.csv")), &report.sweep)?;
        write_confusion_csv(&args.out.join(format!("confusion_{name}_base.csv")), &ds.classes, &report.confusion_base)?;
        write_confusion_csv(&args.out.join(format!("confusion_{name}_tau.csv")), &ds.classes, &report.confusion_selected)?;
        let overlays = args.out.join("overlays").join(name);
        for (image, r) in ds.test.iter().zip(&results) {
            write_overlays(&overlays, image, &r.predictions, &thr)?;
        }
        let median = |s: &Option<spectag_core::pipeline::Summary>| s.as_ref().map_or(f64::NAN, |s| s.median);
        println!(
            "{name}: median Acc_Spx {:.4} base, {:.4} at {} > {}; Acc_Tag {:.4} ({} abstained)",
            median(&report.base.acc_spx),
            median(&report.selected.acc_spx),
            config.metric,
            config.tau,
            report.selected.acc_tag.mean.unwrap_or(f64::NAN),
            report.selected.acc_tag.abstained
        );
    }
    println!("reports written to {}", args.out.display());
    Ok(())
}

pub fn sweep(args: SweepArgs) -> Result<()> {
    let config = load_config(&args.cfg)?;
    let model = MulticlassModel::load(&args.model)?;
    let ds = prepare(&args.manifest, &config, &[Split::Test], false)?;
    let (_, results) = evaluate_model(&ds, &model, Modality::Mi, &config)?;
    let mut rows = vec![operating_point(&results, None)];
    rows.extend(tau_sweep(&results, &config.tau_grid, config.metric));
    create_dir(&args.out)?;
    write_sweep_csv(&args.out.join("sweep.csv"), &rows)?;
    write_report(&args.out.join("sweep.json"), &rows)?;
    println!("{} operating points written to {}", rows.len(), args.out.display());
    Ok(())
}

pub fn loo(args: LooArgs) -> Result<()> {
    let config = load_config(&args.cfg)?;
    let (ds, c, gamma) = match &args.model {
        Some(p) => {
            let model = MulticlassModel::load(p)?;
            let ds = prepare(&args.manifest, &config, &[Split::Train, Split::Test], false)?;
            (ds, model.c, model.gamma)
        }
        None => {
            let ds = prepare(&args.manifest, &config, &[Split::Train, Split::Test], false)?;
            let (model, _) = train_model(&ds, Modality::Mi, &config)?;
            (ds, model.c, model.gamma)
        }
    };
    let report = leave_one_organ_out(&ds, Modality::Mi, c, gamma, &config.threshold(), &config)?;
    create_dir(&args.out)?;
    write_report(&args.out.join("loo_mi.json"), &report)?;
    write_loo_csv(&args.out.join("loo_mi.csv"), &report)?;
    for r in &report.rows {
        println!(
            "{:>12}: LC_ex {:.3}  LC_in {:.3}",
            r.organ,
            r.lc_ex.unwrap_or(f64::NAN),
            r.lc_in.unwrap_or(f64::NAN)
        );
    }
    println!(
        "mean LC_ex {:.3}, mean LC_in {:.3}",
        report.mean_lc_ex.unwrap_or(f64::NAN),
        report.mean_lc_in.unwrap_or(f64::NAN)
    );
    Ok(())
}

pub fn features(args: FeaturesArgs) -> Result<()> {
    let config = load_config(&args.cfg)?;
    let ds = prepare(&args.manifest, &config, &[Split::Train, Split::Test], args.compare_rgb)?;
    let modality = if args.compare_rgb { Modality::Rgb } else { Modality::Mi };
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    let mut w = csv::Writer::from_path(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let mut rows = 0usize;
    for image in ds.train.iter().chain(&ds.test) {
        let feats = image.features(modality)?;
        for (id, fv) in &feats.vectors {
            if rows == 0 {
                let mut header: Vec<String> = ["image", "split", "superpixel", "truth", "purity"].map(String::from).to_vec();
                header.extend((0..fv.0.len()).map(|k| format!("f{k}")));
                w.write_record(&header)?;
            }
            let truth = image.truth[*id];
            let mut rec = vec![
                image.info.id.clone(),
                format!("{:?}", image.info.split).to_lowercase(),
                id.to_string(),
                truth.map_or(String::new(), |t| ds.classes[t.class].clone()),
                truth.map_or(String::new(), |t| t.purity.to_string()),
            ];
            rec.extend(fv.0.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
            rows += 1;
        }
    }
    w.flush()?;
    println!("{rows} {} feature vectors written to {}", modality.name(), args.out.display());
    Ok(())
}
