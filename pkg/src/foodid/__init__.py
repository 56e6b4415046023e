"""Food photo classification pipeline: augmentation, convnet features,
clustering checks, and three from-scratch classifiers.

The usual entry points:

    images.load_manifest / decode_image / resize_bilinear / image_to_tensor
    augment.generate_variants / augment_dataset
    convnet.load_weight_bundle / forward / vgg16_64_bundle / tiny_bundle
    features.extract_features / save_features / load_features
    cluster.kmeans_fit / silhouette_mean / k_sweep
    learners.svm_train / gbdt_train / mlp_train (+ *_predict, save/load_model)
    pipeline.train_test_split / kfold / grid_search_c / run_grid / run_experiment
"""

__version__ = "0.1.0"
