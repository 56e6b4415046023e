"""Export torchvision VGG16 convolutional weights into the FWB1 bundle format."""

from .export import ExportJob, DownloadFailure, LayoutMismatch, export_vgg16

__all__ = ["ExportJob", "DownloadFailure", "LayoutMismatch", "export_vgg16"]
