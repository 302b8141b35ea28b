"""
BankRisk - bank bankruptcy prediction from CAMELS ratios
Logistic regression, random forest and SVM with SMOTE, grid search and trend warnings
"""

from bankrisk_app import main

if __name__ == "__main__":
    raise SystemExit(main())
